use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six supported problems. `Coloring(k)` carries its color budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TaskKind {
    Mis,
    Mvc,
    MaxClique,
    MaxCut,
    Mds,
    Coloring(usize),
}

impl TaskKind {
    /// Output width of this task's head.
    pub fn width(self) -> usize {
        match self {
            TaskKind::Coloring(k) => k,
            _ => 1,
        }
    }

    /// True when a larger discrete objective is better.
    pub fn maximizes(self) -> bool {
        matches!(self, TaskKind::Mis | TaskKind::MaxClique | TaskKind::MaxCut)
    }

    /// Tasks whose solution is a node subset.
    pub fn is_subset_task(self) -> bool {
        matches!(self, TaskKind::Mis | TaskKind::Mvc | TaskKind::MaxClique | TaskKind::Mds)
    }

    /// Whether objective `a` is strictly better than `b` for this task.
    pub fn better(self, a: i64, b: i64) -> bool {
        if self.maximizes() {
            a > b
        } else {
            a < b
        }
    }

    pub fn all(colors: usize) -> [TaskKind; 6] {
        [
            TaskKind::Mis,
            TaskKind::Mvc,
            TaskKind::MaxClique,
            TaskKind::MaxCut,
            TaskKind::Mds,
            TaskKind::Coloring(colors),
        ]
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Mis => f.write_str("mis"),
            TaskKind::Mvc => f.write_str("mvc"),
            TaskKind::MaxClique => f.write_str("maxclique"),
            TaskKind::MaxCut => f.write_str("maxcut"),
            TaskKind::Mds => f.write_str("mds"),
            TaskKind::Coloring(k) => write!(f, "coloring:{k}"),
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let task = match lower.as_str() {
            "mis" => TaskKind::Mis,
            "mvc" => TaskKind::Mvc,
            "maxclique" | "clique" => TaskKind::MaxClique,
            "maxcut" | "cut" => TaskKind::MaxCut,
            "mds" => TaskKind::Mds,
            other => {
                let k = other
                    .strip_prefix("coloring:")
                    .or_else(|| other.strip_prefix("coloring"))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown task {s:?}")))?;
                let k: usize = if k.is_empty() {
                    10
                } else {
                    k.parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad color count in {s:?}")))?
                };
                if k == 0 {
                    return Err(Error::InvalidArgument("coloring needs at least one color".into()));
                }
                TaskKind::Coloring(k)
            }
        };
        Ok(task)
    }
}

impl TryFrom<String> for TaskKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TaskKind> for String {
    fn from(t: TaskKind) -> Self {
        t.to_string()
    }
}

/// A discrete answer for a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solution {
    /// Sorted node list.
    Subset(Vec<usize>),
    /// Side of every node.
    Partition(Vec<bool>),
    /// Color of every node.
    Colors(Vec<usize>),
}

impl Solution {
    pub fn subset_from_mask(mask: &[bool]) -> Solution {
        Solution::Subset(mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in TaskKind::all(7) {
            assert_eq!(t.to_string().parse::<TaskKind>().unwrap(), t);
        }
        assert_eq!("coloring".parse::<TaskKind>().unwrap(), TaskKind::Coloring(10));
        assert!("coloring:0".parse::<TaskKind>().is_err());
        assert!("tsp".parse::<TaskKind>().is_err());
    }
}
