use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Fleet vehicle identifier, e.g. `bus-3`.
    VehicleId
);

string_id!(
    /// Service line tag. `red`, `blue` and `black` are the built-in lines but
    /// any tag is accepted.
    LineTag
);

impl LineTag {
    /// Sort key used when naming line pairs: the built-in lines first, in
    /// the order red, blue, black; anything else afterwards by name.
    pub fn rank(&self) -> (u8, &str) {
        match self.0.as_str() {
            "red" => (0, ""),
            "blue" => (1, ""),
            "black" => (2, ""),
            other => (3, other),
        }
    }
}

/// Trip identifier assigned by the fleet service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripId(pub u64);

impl fmt::Display for TripId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
