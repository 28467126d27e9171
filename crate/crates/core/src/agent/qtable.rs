use std::collections::BTreeMap;
use std::path::Path;

use super::{AgentError, AgentState};
use crate::sim::Placement;
use crate::{Error, Scalar};

const HEADER: &str = "# cosim qtable v1";

/// Primary table `Q_A`, target table `Q_B` and the update count since the
/// last sync. Unseen states read as zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QTablePair<T> {
    pub q_primary: BTreeMap<AgentState, [T; 2]>,
    pub q_target: BTreeMap<AgentState, [T; 2]>,
    pub steps_since_sync: usize,
}

impl<T: Scalar> QTablePair<T> {
    pub fn new() -> Self {
        Self {
            q_primary: BTreeMap::new(),
            q_target: BTreeMap::new(),
            steps_since_sync: 0,
        }
    }

    pub fn primary(&self, s: &AgentState) -> [T; 2] {
        self.q_primary.get(s).copied().unwrap_or([T::zero(); 2])
    }

    pub fn target(&self, s: &AgentState) -> [T; 2] {
        self.q_target.get(s).copied().unwrap_or([T::zero(); 2])
    }

    pub(crate) fn primary_mut(&mut self, s: AgentState) -> &mut [T; 2] {
        self.q_primary.entry(s).or_insert([T::zero(); 2])
    }

    pub fn sync_target(&mut self) {
        self.q_target.clone_from(&self.q_primary);
        self.steps_since_sync = 0;
    }

    /// Every stored value of both tables.
    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.q_primary
            .values()
            .chain(self.q_target.values())
            .flat_map(|v| v.iter().copied())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\nsteps_since_sync {}\n", self.steps_since_sync);
        for (tag, table) in [("primary", &self.q_primary), ("target", &self.q_target)] {
            for (s, [c, f]) in table {
                out.push_str(&format!("{tag} {s} {c} {f}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, AgentError> {
        let bad = |line: usize, m: &str| AgentError::Format(format!("line {line}: {m}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, HEADER)) => {}
            _ => return Err(bad(1, &format!("expected '{HEADER}'"))),
        }
        let mut q = Self::new();
        let mut saw_steps = false;
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[..] {
                ["steps_since_sync", v] => {
                    q.steps_since_sync = v.parse().map_err(|_| bad(n, "bad step count"))?;
                    saw_steps = true;
                }
                [tag @ ("primary" | "target"), layer, prev, ib, ob, c, f] => {
                    let state = AgentState {
                        layer_index: layer.parse().map_err(|_| bad(n, "bad layer index"))?,
                        prev_placement: match prev {
                            "none" => None,
                            "cpu" => Some(Placement::Cpu),
                            "fpga" => Some(Placement::Fpga),
                            _ => return Err(bad(n, "placement must be none, cpu or fpga")),
                        },
                        intensity_bucket: ib.parse().map_err(|_| bad(n, "bad intensity bucket"))?,
                        occupancy_bucket: ob.parse().map_err(|_| bad(n, "bad occupancy bucket"))?,
                    };
                    let value = |v: &str| v.parse::<T>().map_err(|_| bad(n, "bad q-value"));
                    let table = if tag == "primary" {
                        &mut q.q_primary
                    } else {
                        &mut q.q_target
                    };
                    if table.insert(state, [value(c)?, value(f)?]).is_some() {
                        return Err(bad(n, "duplicate state"));
                    }
                }
                _ => return Err(bad(n, "unrecognized line")),
            }
        }
        if !saw_steps {
            return Err(AgentError::Format("missing steps_since_sync".into()));
        }
        if let Some(s) = q.q_target.keys().find(|s| !q.q_primary.contains_key(s)) {
            return Err(AgentError::Format(format!(
                "target state ({s}) missing from primary table"
            )));
        }
        Ok(q)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_text(&text)?)
    }
}
