use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Traffic participant classes carried by the annotation format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Car,
    Truck,
    Bus,
    Motorcycle,
    Bicycle,
    Pedestrian,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Car,
        Category::Truck,
        Category::Bus,
        Category::Motorcycle,
        Category::Bicycle,
        Category::Pedestrian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Truck => "truck",
            Category::Bus => "bus",
            Category::Motorcycle => "motorcycle",
            Category::Bicycle => "bicycle",
            Category::Pedestrian => "pedestrian",
        }
    }

    /// Motorised road vehicles. Bicycles and pedestrians are excluded from
    /// the car-following rules but still show up in statistics.
    pub fn is_vehicle(self) -> bool {
        matches!(
            self,
            Category::Car | Category::Truck | Category::Bus | Category::Motorcycle
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown category `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}
