use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Statement tables for the six PTB-XL tasks, shipped as data.
pub const PTBXL_MAPPING: &str = include_str!("../../config/ptbxl_tasks.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKind {
    All,
    Diag,
    Sub,
    Super,
    Form,
    Rhythm,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::All,
        TaskKind::Diag,
        TaskKind::Sub,
        TaskKind::Super,
        TaskKind::Form,
        TaskKind::Rhythm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::All => "all",
            TaskKind::Diag => "diag",
            TaskKind::Sub => "sub",
            TaskKind::Super => "super",
            TaskKind::Form => "form",
            TaskKind::Rhythm => "rhythm",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            TaskKind::All => 71,
            TaskKind::Diag => 44,
            TaskKind::Sub => 23,
            TaskKind::Super => 5,
            TaskKind::Form => 19,
            TaskKind::Rhythm => 12,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// Ordered class list of a task plus the statement → class table.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub class_names: Vec<String>,
    mapping: HashMap<String, usize>,
}

impl TaskSpec {
    /// Every statement is its own class.
    pub fn identity(name: &str, classes: &[String]) -> Self {
        TaskSpec {
            name: name.to_string(),
            class_names: classes.to_vec(),
            mapping: classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect(),
        }
    }

    pub fn ptbxl(kind: TaskKind) -> Result<Self> {
        let spec = Self::parse_section(PTBXL_MAPPING, kind.name(), "built-in PTB-XL mapping")?;
        if spec.num_classes() != kind.num_classes() {
            return Err(Error::Parse {
                context: "built-in PTB-XL mapping".into(),
                reason: format!(
                    "task {kind} has {} classes, expected {}",
                    spec.num_classes(),
                    kind.num_classes()
                ),
            });
        }
        Ok(spec)
    }

    /// Reads section `[task]` of a mapping file of `statement_code,class_name` lines.
    pub fn from_mapping_file(path: impl AsRef<Path>, task: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_section(&text, task, &path.display().to_string())
    }

    pub fn parse_section(text: &str, task: &str, context: &str) -> Result<Self> {
        let mut in_section = false;
        let mut found = false;
        let mut class_names: Vec<String> = Vec::new();
        let mut mapping = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(sec) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                in_section = sec.trim().eq_ignore_ascii_case(task);
                found |= in_section;
                continue;
            }
            if !in_section {
                continue;
            }
            let (code, class) = line.split_once(',').ok_or_else(|| Error::Parse {
                context: context.to_string(),
                reason: format!("line {}: expected `statement,class`", lineno + 1),
            })?;
            let (code, class) = (code.trim(), class.trim());
            let idx = match class_names.iter().position(|c| c == class) {
                Some(i) => i,
                None => {
                    class_names.push(class.to_string());
                    class_names.len() - 1
                }
            };
            mapping.insert(code.to_string(), idx);
        }
        if !found || class_names.is_empty() {
            return Err(Error::Parse {
                context: context.to_string(),
                reason: format!("no entries for task [{task}]"),
            });
        }
        Ok(TaskSpec {
            name: task.to_string(),
            class_names,
            mapping,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_of(&self, statement: &str) -> Option<usize> {
        self.mapping.get(statement).copied()
    }

    /// Multi-hot labels for a statement list, plus the count of statements
    /// the task does not know.
    pub fn encode(&self, statements: &[String]) -> (Vec<u8>, usize) {
        let mut labels = vec![0u8; self.num_classes()];
        let mut unknown = 0;
        for s in statements {
            match self.class_of(s) {
                Some(i) => labels[i] = 1,
                None => unknown += 1,
            }
        }
        (labels, unknown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_class_counts() {
        for kind in TaskKind::ALL {
            let spec = TaskSpec::ptbxl(kind).unwrap();
            assert_eq!(spec.num_classes(), kind.num_classes(), "{kind}");
        }
    }

    #[test]
    fn hierarchy_lookups() {
        let sup = TaskSpec::ptbxl(TaskKind::Super).unwrap();
        let mi = sup.class_names.iter().position(|c| c == "MI").unwrap();
        assert_eq!(sup.class_of("IMI"), Some(mi));
        assert_eq!(sup.class_of("ASMI"), Some(mi));
        // rhythm statements are not diagnostic
        assert_eq!(sup.class_of("AFIB"), None);

        let (labels, unknown) = sup.encode(&["IMI".into(), "AFIB".into(), "NORM".into()]);
        assert_eq!(labels.iter().filter(|&&b| b == 1).count(), 2);
        assert_eq!(unknown, 1);
    }

    #[test]
    fn task_names_parse() {
        assert_eq!("Super".parse::<TaskKind>().unwrap(), TaskKind::Super);
        assert!("bogus".parse::<TaskKind>().is_err());
    }

    #[test]
    fn missing_section_is_error() {
        assert!(TaskSpec::parse_section("[a]\nx,y\n", "b", "t").is_err());
        assert!(TaskSpec::parse_section("[a]\nxy\n", "a", "t").is_err());
    }
}
