//! The device file: a versioned TOML document holding named transmons,
//! resonators, couplings, noise parameters, tone sets, measured
//! frequencies, and measured relaxation times. Units are annotated in the
//! field names.
//!
//! ```toml
//! schema = "qudit-device/1"
//!
//! [transmons.Q5]
//! e_c_ghz = 0.099
//! e_j_ghz = [32.191]
//! n_g = 0.0
//! resonator = "R5"
//!
//! [resonators.R5]
//! f_r_ghz = 6.468937
//! g_ghz = 0.0281
//! kappa_ghz = 0.00055
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dispersive::ResonatorModel;
use crate::error::{Error, Result};
use crate::hamiltonian::{TransmonModel, DEFAULT_CUTOFF};
use crate::noise::NoiseParams;
use crate::paramfit::ObservationSet;
use crate::readout::{Tone, ToneSet};

pub const SCHEMA: &str = "qudit-device/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFile {
    /// Schema identifier; must be [`SCHEMA`].
    pub schema: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub transmons: BTreeMap<String, TransmonEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub resonators: BTreeMap<String, ResonatorEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub couplings: BTreeMap<String, CouplingEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tonesets: BTreeMap<String, ToneSetEntry>,
    /// Measured transition/resonator frequencies keyed by transmon name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub observations: BTreeMap<String, ObservationEntry>,
    /// Measured relaxation times keyed by transmon name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub t1_data: BTreeMap<String, T1Entry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonEntry {
    pub e_c_ghz: f64,
    /// Signed harmonic energies `E_J1..E_JM`.
    pub e_j_ghz: Vec<f64>,
    #[serde(default)]
    pub n_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    /// Name of this transmon's readout resonator, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorEntry {
    pub f_r_ghz: f64,
    pub g_ghz: f64,
    pub kappa_ghz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_internal_ghz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_coupling_ghz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub a: String,
    pub b: String,
    pub j_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    pub x_qp: f64,
    pub gap_uev: f64,
    pub q_diel0: f64,
    pub epsilon: f64,
    pub temperature_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSetEntry {
    pub integration_us: f64,
    pub tones: Vec<ToneEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneEntry {
    pub f_d_ghz: f64,
    pub omega_ghz: f64,
    #[serde(default)]
    pub phi_rad: f64,
    pub demod_f_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationEntry {
    /// `f01, f12, ...` in order.
    pub f_transitions_ghz: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_r0_ghz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_r1_ghz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T1Entry {
    /// `T1` of levels 1, 2, ... in µs.
    pub t1_us: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1_err_us: Option<Vec<f64>>,
}

impl DeviceFile {
    pub fn new() -> Self {
        Self {
            schema: SCHEMA.into(),
            transmons: BTreeMap::new(),
            resonators: BTreeMap::new(),
            couplings: BTreeMap::new(),
            noise: None,
            tonesets: BTreeMap::new(),
            observations: BTreeMap::new(),
            t1_data: BTreeMap::new(),
        }
    }

    /// Check the schema version, every cross-reference, and every embedded
    /// model's invariants.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema '{}', expected '{SCHEMA}'",
                self.schema
            )));
        }
        for (name, t) in &self.transmons {
            self.transmon(name)?.validate().map_err(|e| {
                Error::Parse(format!("transmon {name}: {e}"))
            })?;
            if let Some(res) = &t.resonator {
                if !self.resonators.contains_key(res) {
                    return Err(Error::Parse(format!(
                        "transmon {name} references unknown resonator {res}"
                    )));
                }
            }
        }
        for (name, _) in &self.resonators {
            self.resonator(name)?
                .validate()
                .map_err(|e| Error::Parse(format!("resonator {name}: {e}")))?;
        }
        for (name, c) in &self.couplings {
            for side in [&c.a, &c.b] {
                if !self.transmons.contains_key(side) {
                    return Err(Error::Parse(format!(
                        "coupling {name} references unknown transmon {side}"
                    )));
                }
            }
            if !c.j_ghz.is_finite() {
                return Err(Error::Parse(format!("coupling {name} has non-finite J")));
            }
        }
        if let Some(noise) = &self.noise {
            NoiseParams::from(noise)
                .validate()
                .map_err(|e| Error::Parse(format!("noise: {e}")))?;
        }
        for (name, _) in &self.tonesets {
            self.toneset(name)?
                .validate()
                .map_err(|e| Error::Parse(format!("toneset {name}: {e}")))?;
        }
        for (name, obs) in &self.observations {
            if !self.transmons.contains_key(name) {
                return Err(Error::Parse(format!(
                    "observations for unknown transmon {name}"
                )));
            }
            if obs.f_transitions_ghz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
                return Err(Error::Parse(format!(
                    "non-positive transition frequency for {name}"
                )));
            }
            if obs.f_r0_ghz.is_some() != obs.f_r1_ghz.is_some() {
                return Err(Error::Parse(format!(
                    "observations for {name} need both resonator frequencies or neither"
                )));
            }
        }
        for (name, entry) in &self.t1_data {
            if !self.transmons.contains_key(name) {
                return Err(Error::Parse(format!("t1_data for unknown transmon {name}")));
            }
            if entry.t1_us.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return Err(Error::Parse(format!("non-positive T1 for {name}")));
            }
            if let Some(errs) = &entry.t1_err_us {
                if errs.len() != entry.t1_us.len() {
                    return Err(Error::Parse(format!(
                        "t1_data for {name}: {} uncertainties for {} values",
                        errs.len(),
                        entry.t1_us.len()
                    )));
                }
            }
        }
        Ok(())
    }

    fn entry<'a, T>(map: &'a BTreeMap<String, T>, kind: &str, name: &str) -> Result<&'a T> {
        map.get(name)
            .ok_or_else(|| Error::InvalidInput(format!("no {kind} named {name}")))
    }

    pub fn transmon(&self, name: &str) -> Result<TransmonModel> {
        let t = Self::entry(&self.transmons, "transmon", name)?;
        Ok(TransmonModel {
            e_c: t.e_c_ghz,
            e_j: t.e_j_ghz.clone(),
            n_g: t.n_g,
            cutoff: t.cutoff.unwrap_or(DEFAULT_CUTOFF),
        })
    }

    pub fn resonator(&self, name: &str) -> Result<ResonatorModel> {
        let r = Self::entry(&self.resonators, "resonator", name)?;
        let kappa_split = match (r.kappa_internal_ghz, r.kappa_coupling_ghz) {
            (Some(i), Some(c)) => Some((i, c)),
            (None, None) => None,
            _ => {
                return Err(Error::Parse(format!(
                    "resonator {name} has only one half of the kappa split"
                )))
            }
        };
        Ok(ResonatorModel {
            f_r: r.f_r_ghz,
            g: r.g_ghz,
            kappa: r.kappa_ghz,
            kappa_split,
        })
    }

    /// Resonator attached to a transmon, when declared.
    pub fn resonator_of(&self, transmon: &str) -> Result<ResonatorModel> {
        let t = Self::entry(&self.transmons, "transmon", transmon)?;
        let res_name = t.resonator.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("transmon {transmon} declares no resonator"))
        })?;
        self.resonator(res_name)
    }

    pub fn toneset(&self, name: &str) -> Result<ToneSet> {
        let ts = Self::entry(&self.tonesets, "toneset", name)?;
        Ok(ToneSet {
            tones: ts
                .tones
                .iter()
                .map(|t| Tone {
                    f_d: t.f_d_ghz,
                    amplitude: t.omega_ghz,
                    phase: t.phi_rad,
                    demod_f: t.demod_f_ghz,
                })
                .collect(),
            integration_time: ts.integration_us,
        })
    }

    pub fn noise_params(&self) -> Result<NoiseParams> {
        self.noise
            .as_ref()
            .map(NoiseParams::from)
            .ok_or_else(|| Error::InvalidInput("device file has no noise section".into()))
    }

    pub fn observation_set(&self, transmon: &str) -> Result<ObservationSet> {
        let obs = Self::entry(&self.observations, "observations entry", transmon)?;
        Ok(ObservationSet {
            transition_freqs: obs
                .f_transitions_ghz
                .iter()
                .enumerate()
                .map(|(i, &f)| (i, f))
                .collect(),
            resonator_freqs: obs.f_r0_ghz.zip(obs.f_r1_ghz),
        })
    }

    pub fn coupling_j(&self, a: &str, b: &str) -> Result<f64> {
        self.couplings
            .values()
            .find(|c| (c.a == a && c.b == b) || (c.a == b && c.b == a))
            .map(|c| c.j_ghz)
            .ok_or_else(|| {
                Error::InvalidInput(format!("no coupling between {a} and {b} in device file"))
            })
    }

    /// The sole transmon name, when the file holds exactly one.
    pub fn sole_transmon(&self) -> Option<&str> {
        if self.transmons.len() == 1 {
            self.transmons.keys().next().map(String::as_str)
        } else {
            None
        }
    }
}

impl Default for DeviceFile {
    fn default() -> Self {
        Self::new()
    }
}

impl From<&NoiseEntry> for NoiseParams {
    fn from(n: &NoiseEntry) -> Self {
        NoiseParams {
            x_qp: n.x_qp,
            gap: n.gap_uev,
            q_diel0: n.q_diel0,
            epsilon: n.epsilon,
            temperature: n.temperature_k,
        }
    }
}

/// Parse and validate a device file from TOML text.
pub fn parse_device_file(text: &str) -> Result<DeviceFile> {
    let file: DeviceFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.validate()?;
    Ok(file)
}

/// Emit a device file as TOML text.
pub fn emit_device_file(file: &DeviceFile) -> Result<String> {
    toml::to_string_pretty(file).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_device_file(path: &Path) -> Result<DeviceFile> {
    parse_device_file(&std::fs::read_to_string(path)?)
}

pub fn save_device_file(file: &DeviceFile, path: &Path) -> Result<()> {
    std::fs::write(path, emit_device_file(file)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> String {
        r#"
schema = "qudit-device/1"

[transmons.Q5]
e_c_ghz = 0.099
e_j_ghz = [32.191]
n_g = 0.0
resonator = "R5"

[resonators.R5]
f_r_ghz = 6.468937
g_ghz = 0.0281
kappa_ghz = 0.00055

[observations.Q5]
f_transitions_ghz = [4.9472, 4.8437, 4.7356]
f_r0_ghz = 6.468937
f_r1_ghz = 6.468672

[t1_data.Q5]
t1_us = [64.0, 34.0, 24.0]

[noise]
x_qp = 1.0e-8
gap_uev = 200.0
q_diel0 = 3.0e6
epsilon = 0.7
temperature_k = 0.010

[tonesets.default]
integration_us = 2.2

[[tonesets.default.tones]]
f_d_ghz = 6.4688
omega_ghz = 0.1
phi_rad = 0.0
demod_f_ghz = 6.4688
"#
        .to_string()
    }

    #[test]
    fn parses_and_converts() {
        let file = parse_device_file(&sample()).unwrap();
        let model = file.transmon("Q5").unwrap();
        assert_eq!(model.e_j, vec![32.191]);
        assert_eq!(model.cutoff, DEFAULT_CUTOFF);
        let res = file.resonator_of("Q5").unwrap();
        assert_eq!(res.kappa, 0.00055);
        let tones = file.toneset("default").unwrap();
        assert_eq!(tones.tone_count(), 1);
        let obs = file.observation_set("Q5").unwrap();
        assert_eq!(obs.transition_freqs.len(), 3);
        assert!(obs.resonator_freqs.is_some());
        assert_eq!(file.sole_transmon(), Some("Q5"));
    }

    #[test]
    fn round_trip_is_lossless() {
        let file = parse_device_file(&sample()).unwrap();
        let emitted = emit_device_file(&file).unwrap();
        let reparsed = parse_device_file(&emitted).unwrap();
        assert_eq!(file, reparsed);
    }

    #[test]
    fn rejects_bad_schema() {
        let text = sample().replace("qudit-device/1", "qudit-device/9");
        assert!(matches!(parse_device_file(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_dangling_references() {
        let text = sample().replace("resonator = \"R5\"", "resonator = \"R9\"");
        assert!(parse_device_file(&text).is_err());
    }

    #[test]
    fn rejects_invalid_model_values() {
        let text = sample().replace("e_c_ghz = 0.099", "e_c_ghz = -0.099");
        assert!(parse_device_file(&text).is_err());
        let text = sample().replace("kappa_ghz = 0.00055", "kappa_ghz = 0.0");
        assert!(parse_device_file(&text).is_err());
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = sample().replace("n_g = 0.0", "n_g = 0.0\nbogus_field = 1");
        assert!(parse_device_file(&text).is_err());
    }

    #[test]
    fn rejects_half_observations() {
        let text = sample().replace("f_r1_ghz = 6.468672\n", "");
        assert!(parse_device_file(&text).is_err());
    }
}
