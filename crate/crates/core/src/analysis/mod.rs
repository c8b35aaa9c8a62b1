//! Buffer derivation, exact access counts and energy pricing.

mod buffers;
mod counts;
mod pricing;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use buffers::{derive_buffers, derive_buffers_with, nominal_refetch_rate, BufferAlloc};
pub use counts::{access_counts, access_counts_with, AccessProfile, BufferCounts};
pub(crate) use pricing::{dedicated_energy, evaluate, price as pricing_report, Evaluation};
pub use pricing::{
    pack_buffers, schedule_energy, schedule_energy_with, BufferEnergy, EnergyMode, EnergyReport,
    MemorySpec, PackingPlan, Placement,
};

/// Partial sums are read and written back once per update.
pub const OB_UPDATE_FACTOR: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BufferKind {
    #[serde(rename = "IB")]
    Input,
    #[serde(rename = "KB")]
    Kernel,
    #[serde(rename = "OB")]
    Output,
}

impl BufferKind {
    pub const ALL: [BufferKind; 3] = [BufferKind::Input, BufferKind::Kernel, BufferKind::Output];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short(self) -> &'static str {
        match self {
            BufferKind::Input => "IB",
            BufferKind::Kernel => "KB",
            BufferKind::Output => "OB",
        }
    }
}

impl fmt::Display for BufferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for BufferKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_uppercase().as_str() {
            "IB" | "INPUT" => Ok(BufferKind::Input),
            "KB" | "KERNEL" => Ok(BufferKind::Kernel),
            "OB" | "OUTPUT" => Ok(BufferKind::Output),
            _ => Err(Error::InvalidHierarchy(format!("unknown buffer kind `{s}`"))),
        }
    }
}

/// One value per buffer kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerKind<T> {
    #[serde(rename = "IB")]
    pub input: T,
    #[serde(rename = "KB")]
    pub kernel: T,
    #[serde(rename = "OB")]
    pub output: T,
}

impl<T> PerKind<T> {
    pub fn get(&self, kind: BufferKind) -> &T {
        match kind {
            BufferKind::Input => &self.input,
            BufferKind::Kernel => &self.kernel,
            BufferKind::Output => &self.output,
        }
    }

    pub fn get_mut(&mut self, kind: BufferKind) -> &mut T {
        match kind {
            BufferKind::Input => &mut self.input,
            BufferKind::Kernel => &mut self.kernel,
            BufferKind::Output => &mut self.output,
        }
    }
}

/// Options shared by the analytic model and the simulator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Level-0 input buffer loads only the new columns when the loop right
    /// above it steps along X.
    #[serde(default)]
    pub shift_window: bool,
}

pub(crate) mod ratio_str {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u64>, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(|_| serde::de::Error::custom(format!("bad ratio `{text}`")))
    }
}
