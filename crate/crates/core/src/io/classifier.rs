//! Classifier files: a versioned JSON document holding the per-state means,
//! covariances, and weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discriminate::GaussianClassifier;
use crate::error::{Error, Result};

pub const FORMAT: &str = "qudit-classifier/1";

#[derive(Debug, Serialize, Deserialize)]
struct ClassifierFile {
    format: String,
    #[serde(flatten)]
    classifier: GaussianClassifier,
}

/// Serialize a classifier to the versioned text format.
pub fn to_string(clf: &GaussianClassifier) -> Result<String> {
    let file = ClassifierFile {
        format: FORMAT.into(),
        classifier: clf.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))
}

/// Parse and validate a classifier from (untrusted) text.
pub fn from_str(text: &str) -> Result<GaussianClassifier> {
    let file: ClassifierFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format != FORMAT {
        return Err(Error::Parse(format!(
            "unsupported classifier format '{}', expected '{FORMAT}'",
            file.format
        )));
    }
    let clf = file.classifier;
    let d = clf.means.len();
    if d < 2 {
        return Err(Error::Parse("classifier needs at least 2 states".into()));
    }
    if clf.dim == 0 || clf.dim % 2 != 0 || clf.dim > 1024 {
        return Err(Error::Parse(format!("implausible dimension {}", clf.dim)));
    }
    if clf.covariances.len() != d || clf.weights.len() != d {
        return Err(Error::Parse("inconsistent state counts across fields".into()));
    }
    for (k, mean) in clf.means.iter().enumerate() {
        if mean.len() != clf.dim {
            return Err(Error::Parse(format!("state {k} mean has wrong length")));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("state {k} mean not finite")));
        }
    }
    for (k, cov) in clf.covariances.iter().enumerate() {
        if cov.len() != clf.dim * clf.dim {
            return Err(Error::Parse(format!(
                "state {k} covariance has wrong length"
            )));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("state {k} covariance not finite")));
        }
        for i in 0..clf.dim {
            for j in 0..i {
                let a = cov[i * clf.dim + j];
                let b = cov[j * clf.dim + i];
                if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Parse(format!(
                        "state {k} covariance is not symmetric"
                    )));
                }
            }
        }
    }
    if clf.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Parse("weights must be finite and nonnegative".into()));
    }
    Ok(clf)
}

pub fn save(clf: &GaussianClassifier, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(clf)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<GaussianClassifier> {
    from_str(&std::fs::read_to_string(path)?)
}
