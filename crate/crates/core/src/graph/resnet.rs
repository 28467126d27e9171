use super::{LayerSpec, ModelGraph, TensorShape};

pub const DEFAULT_NUM_CLASSES: usize = 10;

/// Small residual CNN with a [`DEFAULT_NUM_CLASSES`]-way classifier.
///
/// Layout: a 3×3 stem convolution, then `num_blocks` residual blocks of
/// `Conv → Activation → Conv → ElementwiseAdd → Activation`, global average
/// pooling and a fully-connected classifier. Every second block (indices
/// 1, 3, ...) doubles the channel count and downsamples with stride 2; its
/// shortcut is a 1×1 stride-2 projection convolution so the addition sees
/// matching shapes.
pub fn build_resnet_like(
    num_blocks: usize,
    base_channels: usize,
    input_shape: TensorShape,
) -> ModelGraph {
    build_resnet_like_with_classes(num_blocks, base_channels, input_shape, DEFAULT_NUM_CLASSES)
}

pub fn build_resnet_like_with_classes(
    num_blocks: usize,
    base_channels: usize,
    input_shape: TensorShape,
    num_classes: usize,
) -> ModelGraph {
    assert!(num_blocks >= 1, "at least one residual block is required");
    let mut layers = Vec::new();
    let mut next_id = 0;
    let mut push = |layers: &mut Vec<LayerSpec>, make: &dyn Fn(usize) -> LayerSpec| {
        let id = next_id;
        next_id += 1;
        layers.push(make(id));
        id
    };

    let in_c = input_shape.channels;
    let mut x = push(&mut layers, &|id| {
        LayerSpec::conv(id, 3, 1, 1, in_c, base_channels, vec![])
    });
    let mut channels = base_channels;
    let (mut h, mut w) = (input_shape.height, input_shape.width);

    for block in 0..num_blocks {
        let downsample = block % 2 == 1;
        let (out_c, stride) = if downsample {
            (channels * 2, 2)
        } else {
            (channels, 1)
        };
        let c = channels;
        let input = x;
        let conv1 = push(&mut layers, &|id| {
            LayerSpec::conv(id, 3, stride, 1, c, out_c, vec![input])
        });
        let act1 = push(&mut layers, &|id| {
            LayerSpec::activation(id, out_c, Some(conv1))
        });
        let conv2 = push(&mut layers, &|id| {
            LayerSpec::conv(id, 3, 1, 1, out_c, out_c, vec![act1])
        });
        let shortcut = if downsample {
            push(&mut layers, &|id| {
                LayerSpec::conv(id, 1, 2, 0, c, out_c, vec![input])
            })
        } else {
            input
        };
        let sum = push(&mut layers, &|id| {
            LayerSpec::add(id, out_c, conv2, shortcut)
        });
        x = push(&mut layers, &|id| {
            LayerSpec::activation(id, out_c, Some(sum))
        });
        if downsample {
            h = (h + 2 - 3) / 2 + 1;
            w = (w + 2 - 3) / 2 + 1;
        }
        channels = out_c;
    }

    let (kh, kw, c) = (h, w, channels);
    let pool = push(&mut layers, &|id| LayerSpec {
        kernel_h: kh,
        kernel_w: kw,
        ..LayerSpec::pool(id, 1, 1, 0, c, vec![x])
    });
    push(&mut layers, &|id| {
        LayerSpec::fully_connected(id, c, num_classes, vec![pool])
    });

    ModelGraph::new(input_shape, layers).expect("generator emits valid graphs")
}
