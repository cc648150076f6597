//! Simulation configuration: named device presets plus a TOML file format
//! that starts from a preset and overrides individual keys.

use serde::{Deserialize, Serialize};

use crate::ssd::{EnergyParams, SsdGeometry, TimingParams};
use crate::{Error, Result};

/// Host-side cost model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostParams {
    /// Sequential read bandwidth from the drive in GB/s.
    pub storage_read_bw_gbps: f64,
    /// Binary-scan throughput in vectors per microsecond. `None` means
    /// calibrate with a runtime micro-benchmark.
    pub hamming_scan_vectors_per_us: Option<f64>,
    /// Full-precision scan throughput in vectors per microsecond.
    pub fp32_scan_vectors_per_us: Option<f64>,
}

impl HostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.storage_read_bw_gbps > 0.0) {
            return Err(Error::InvalidParam("storage bandwidth must be positive".into()));
        }
        for v in [self.hamming_scan_vectors_per_us, self.fp32_scan_vectors_per_us].into_iter().flatten() {
            if !(v > 0.0) {
                return Err(Error::InvalidParam("scan throughput must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Complete simulator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub preset: String,
    pub geometry: SsdGeometry,
    pub timing: TimingParams,
    pub energy: EnergyParams,
    pub host: HostParams,
}

pub const PRESET_NAMES: [&str; 2] = ["reis-ssd1", "reis-ssd2"];

fn base_timing(channel_bw_gbps: f64) -> TimingParams {
    TimingParams {
        t_read_page_us: 22.5,
        // TLC senses roughly three times slower than the SLC partition.
        t_read_page_tlc_us: 67.5,
        t_latch_xor_us: 2.0,
        t_bit_count_us: 0.1,
        channel_bw_gbps,
        t_dram_access_ns: 50.0,
        core_select_entries_per_us: 10.0,
        t_command_overhead_us: 0.0,
        overlap_count_with_read: false,
    }
}

fn base_energy() -> EnergyParams {
    EnergyParams {
        e_read_page_uj: 25.0,
        e_latch_op_uj: 2.0,
        e_channel_nj_per_byte: 0.05,
        e_dram_nj_per_64b: 8.0,
        e_core_active_mw: 500.0,
    }
}

fn base_host() -> HostParams {
    HostParams {
        storage_read_bw_gbps: 6.8,
        hamming_scan_vectors_per_us: None,
        fp32_scan_vectors_per_us: None,
    }
}

impl SimConfig {
    /// Builds one of the named presets. Both drives use 16 KiB pages with a
    /// 2208-byte OOB area and the same SLC sense time; they differ in the
    /// channel/die/plane arrangement and channel bandwidth.
    pub fn preset(name: &str) -> Result<Self> {
        let cfg = match name {
            "reis-ssd1" => SimConfig {
                preset: name.into(),
                geometry: SsdGeometry {
                    channels: 8,
                    dies_per_channel: 16,
                    planes_per_die: 2,
                    page_size: 16384,
                    subpage_size: 4096,
                    oob_size: 2208,
                    pages_per_block: 1024,
                    blocks_per_plane: 256,
                },
                timing: base_timing(1.2),
                energy: base_energy(),
                host: base_host(),
            },
            "reis-ssd2" => SimConfig {
                preset: name.into(),
                geometry: SsdGeometry {
                    channels: 16,
                    dies_per_channel: 8,
                    planes_per_die: 4,
                    page_size: 16384,
                    subpage_size: 4096,
                    oob_size: 2208,
                    pages_per_block: 1024,
                    blocks_per_plane: 256,
                },
                timing: base_timing(2.0),
                energy: base_energy(),
                host: base_host(),
            },
            other => {
                return Err(Error::InvalidParam(format!(
                    "unknown preset {other:?}, expected one of {PRESET_NAMES:?}"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.timing.validate()?;
        self.energy.validate()?;
        self.host.validate()?;
        Ok(())
    }

    /// Parses a TOML config. The file names a base preset (default
    /// `reis-ssd1`) and may override any subset of keys, e.g.
    ///
    /// ```toml
    /// preset = "reis-ssd2"
    /// [timing]
    /// channel_bw_gbps = 2.4
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let overrides: toml::Value = text
            .parse()
            .map_err(|e| Error::format("config file", format!("{e}")))?;
        let preset_name = match overrides.get("preset") {
            None => "reis-ssd1".to_string(),
            Some(toml::Value::String(s)) => s.clone(),
            Some(other) => {
                return Err(Error::format("config file", format!("preset must be a string, got {other}")))
            }
        };
        let base = SimConfig::preset(&preset_name)?;
        let mut merged = toml::Value::try_from(&base)
            .map_err(|e| Error::format("config file", format!("{e}")))?;
        merge_values(&mut merged, &overrides)?;
        let cfg: SimConfig = merged
            .try_into()
            .map_err(|e| Error::format("config file", format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SimConfig::from_toml_str(&text)
    }
}

/// Recursively overlays `src` keys onto `dst`. Unknown keys are rejected so
/// a typo in a config file cannot silently fall back to the preset value.
fn merge_values(dst: &mut toml::Value, src: &toml::Value) -> Result<()> {
    match (dst, src) {
        (toml::Value::Table(d), toml::Value::Table(s)) => {
            for (k, v) in s {
                match d.get_mut(k) {
                    Some(slot) => merge_values(slot, v)?,
                    None => {
                        return Err(Error::format("config file", format!("unknown key {k:?}")));
                    }
                }
            }
            Ok(())
        }
        (d, s) => {
            *d = s.clone();
            Ok(())
        }
    }
}
