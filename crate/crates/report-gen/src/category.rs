use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The closed set of task categories. Names are matched verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TaskCategory {
    PickAndPlace,
    OpenClose,
    MoveSlide,
    KnockOverTopple,
    CoverDrapeFold,
    GroupOrganizeStack,
    FindSearch,
    MinimalOrNoAction,
    ObjectManipulation,
    SortingClassification,
    ToolUse,
}

impl TaskCategory {
    pub const ALL: [TaskCategory; 11] = [
        TaskCategory::PickAndPlace,
        TaskCategory::OpenClose,
        TaskCategory::MoveSlide,
        TaskCategory::KnockOverTopple,
        TaskCategory::CoverDrapeFold,
        TaskCategory::GroupOrganizeStack,
        TaskCategory::FindSearch,
        TaskCategory::MinimalOrNoAction,
        TaskCategory::ObjectManipulation,
        TaskCategory::SortingClassification,
        TaskCategory::ToolUse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskCategory::PickAndPlace => "Pick and Place",
            TaskCategory::OpenClose => "Open / Close",
            TaskCategory::MoveSlide => "Move / Slide",
            TaskCategory::KnockOverTopple => "Knock Over / Topple",
            TaskCategory::CoverDrapeFold => "Cover / Drape / Fold",
            TaskCategory::GroupOrganizeStack => "Group / Organize / Stack",
            TaskCategory::FindSearch => "Find / Search",
            TaskCategory::MinimalOrNoAction => "Minimal or No Action",
            TaskCategory::ObjectManipulation => "Object Manipulation",
            TaskCategory::SortingClassification => "Sorting / Classification",
            TaskCategory::ToolUse => "Tool Use",
        }
    }
}

impl fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Exact, case-sensitive match against the category names.
impl FromStr for TaskCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("{s:?} is not a task category"))
    }
}

impl TryFrom<String> for TaskCategory {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TaskCategory> for String {
    fn from(c: TaskCategory) -> Self {
        c.as_str().to_string()
    }
}
