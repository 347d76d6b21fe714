//! Canonical 1-D spectrum record and the numeric helpers built on it.
//!
//! A [`Spectrum`] is immutable once constructed. Every constructor path runs
//! the same validation, so code holding a `Spectrum` may assume strictly
//! increasing finite wavelengths, finite flux, and in-range sky coordinates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum number of samples accepted by [`estimate_snr`].
pub const SNR_MIN_SAMPLES: usize = 21;
/// Window length of the moving median used as the SNR high-pass filter.
pub const SNR_WINDOW: usize = 21;
/// Value returned by [`estimate_snr`] for a noiseless spectrum.
pub const SNR_CAP: f64 = 1e6;
/// Scale factor turning a median absolute deviation into a Gaussian sigma.
const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed spectrum file: {0}")]
    MalformedFile(String),
    #[error("wavelength is not strictly increasing at index {index}")]
    NonMonotonicWavelength { index: usize },
    #[error("non-finite value in `{field}` at index {index}")]
    NonFiniteValue { field: &'static str, index: usize },
    #[error("`{field}` = {value} is outside its valid range")]
    CoordinateOutOfRange { field: &'static str, value: f64 },
    #[error("invalid wavelength range [{min}, {max}]")]
    InvalidRange { min: f64, max: f64 },
    #[error("no samples inside [{min}, {max}] Å")]
    EmptySlice { min: f64, max: f64 },
    #[error("spectrum has {len} samples, at least {min} required")]
    TooShort { len: usize, min: usize },
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown survey `{0}`")]
    UnknownSurvey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Survey {
    #[serde(rename = "LAMOST")]
    Lamost,
    #[serde(rename = "SDSS")]
    Sdss,
    #[serde(rename = "DESI")]
    Desi,
    #[serde(rename = "SYNTHETIC")]
    Synthetic,
}

impl Survey {
    pub fn as_str(self) -> &'static str {
        match self {
            Survey::Lamost => "LAMOST",
            Survey::Sdss => "SDSS",
            Survey::Desi => "DESI",
            Survey::Synthetic => "SYNTHETIC",
        }
    }
}

impl FromStr for Survey {
    type Err = SpectrumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LAMOST" => Ok(Survey::Lamost),
            "SDSS" => Ok(Survey::Sdss),
            "DESI" => Ok(Survey::Desi),
            "SYNTHETIC" => Ok(Survey::Synthetic),
            other => Err(SpectrumError::UnknownSurvey(other.to_string())),
        }
    }
}

/// Verification task: the five rare-object tasks plus the O/B/A cross-task set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    Cv,
    Cs,
    Ss,
    Mg,
    Wd,
    O,
    B,
    A,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::Cv,
        Task::Cs,
        Task::Ss,
        Task::Mg,
        Task::Wd,
        Task::O,
        Task::B,
        Task::A,
    ];

    /// The five tasks of the main benchmark.
    pub const BENCH: [Task; 5] = [Task::Cv, Task::Cs, Task::Ss, Task::Mg, Task::Wd];

    pub fn code(self) -> &'static str {
        match self {
            Task::Cv => "CV",
            Task::Cs => "CS",
            Task::Ss => "SS",
            Task::Mg => "MG",
            Task::Wd => "WD",
            Task::O => "O",
            Task::B => "B",
            Task::A => "A",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            Task::Cv => "Cataclysmic Variables",
            Task::Cs => "Carbon Stars",
            Task::Ss => "S-type Stars",
            Task::Mg => "M-type Giants",
            Task::Wd => "White Dwarfs",
            Task::O => "O-type Stars",
            Task::B => "B-type Stars",
            Task::A => "A-type Stars",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Task {
    type Err = SpectrumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.code() == s)
            .ok_or_else(|| SpectrumError::UnknownTask(s.to_string()))
    }
}

impl TryFrom<String> for Task {
    type Error = SpectrumError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> Self {
        t.code().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskLabel {
    pub task: Task,
    pub is_positive: bool,
}

/// Closed wavelength interval in Å. Serialized as `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct WavelengthRange {
    min: f64,
    max: f64,
}

impl WavelengthRange {
    pub fn new(min: f64, max: f64) -> Result<Self, SpectrumError> {
        if min.is_finite() && max.is_finite() && min > 0.0 && min < max {
            Ok(Self { min, max })
        } else {
            Err(SpectrumError::InvalidRange { min, max })
        }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn contains(&self, lambda: f64) -> bool {
        self.min <= lambda && lambda <= self.max
    }

    /// Overlap of two ranges, `None` when they share less than a non-degenerate interval.
    pub fn intersect(&self, other: &WavelengthRange) -> Option<WavelengthRange> {
        WavelengthRange::new(self.min.max(other.min), self.max.min(other.max)).ok()
    }
}

impl TryFrom<[f64; 2]> for WavelengthRange {
    type Error = SpectrumError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        WavelengthRange::new(v[0], v[1])
    }
}

impl From<WavelengthRange> for [f64; 2] {
    fn from(r: WavelengthRange) -> Self {
        [r.min, r.max]
    }
}

impl fmt::Display for WavelengthRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{} Å", self.min, self.max)
    }
}

/// Everything needed to build a [`Spectrum`]; validated by [`Spectrum::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumParts {
    pub id: String,
    pub survey: Survey,
    pub wavelength: Vec<f64>,
    pub flux: Vec<f64>,
    pub label: Option<TaskLabel>,
    pub snr: Option<f64>,
    pub ra_deg: Option<f64>,
    pub dec_deg: Option<f64>,
}

/// On-disk layout of a `.specvi.json` file. Field order is the canonical key order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumFile {
    id: String,
    survey: Survey,
    wavelength: Vec<Option<f64>>,
    flux: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<TaskLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ra_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dec_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    id: String,
    survey: Survey,
    wavelength: Vec<f64>,
    flux: Vec<f64>,
    label: Option<TaskLabel>,
    snr: Option<f64>,
    ra_deg: Option<f64>,
    dec_deg: Option<f64>,
}

impl Spectrum {
    pub fn new(parts: SpectrumParts) -> Result<Self, SpectrumError> {
        Self::build(parts, 2)
    }

    fn build(parts: SpectrumParts, min_len: usize) -> Result<Self, SpectrumError> {
        let SpectrumParts {
            id,
            survey,
            wavelength,
            flux,
            label,
            snr,
            ra_deg,
            dec_deg,
        } = parts;
        if wavelength.len() != flux.len() {
            return Err(SpectrumError::MalformedFile(format!(
                "wavelength has {} samples but flux has {}",
                wavelength.len(),
                flux.len()
            )));
        }
        if wavelength.len() < min_len {
            return Err(SpectrumError::MalformedFile(format!(
                "spectrum needs at least {min_len} samples, got {}",
                wavelength.len()
            )));
        }
        if let Some(index) = wavelength.iter().position(|v| !v.is_finite()) {
            return Err(SpectrumError::NonFiniteValue {
                field: "wavelength",
                index,
            });
        }
        if let Some(index) = flux.iter().position(|v| !v.is_finite()) {
            return Err(SpectrumError::NonFiniteValue {
                field: "flux",
                index,
            });
        }
        if let Some(i) = wavelength.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SpectrumError::NonMonotonicWavelength { index: i + 1 });
        }
        if let Some(s) = snr {
            if !(s.is_finite() && s >= 0.0) {
                return Err(SpectrumError::CoordinateOutOfRange {
                    field: "snr",
                    value: s,
                });
            }
        }
        if let Some(ra) = ra_deg {
            if !(ra.is_finite() && (0.0..360.0).contains(&ra)) {
                return Err(SpectrumError::CoordinateOutOfRange {
                    field: "ra_deg",
                    value: ra,
                });
            }
        }
        if let Some(dec) = dec_deg {
            if !(dec.is_finite() && (-90.0..=90.0).contains(&dec)) {
                return Err(SpectrumError::CoordinateOutOfRange {
                    field: "dec_deg",
                    value: dec,
                });
            }
        }
        Ok(Self {
            id,
            survey,
            wavelength,
            flux,
            label,
            snr,
            ra_deg,
            dec_deg,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn survey(&self) -> Survey {
        self.survey
    }

    pub fn wavelength(&self) -> &[f64] {
        &self.wavelength
    }

    pub fn flux(&self) -> &[f64] {
        &self.flux
    }

    pub fn label(&self) -> Option<TaskLabel> {
        self.label
    }

    pub fn snr(&self) -> Option<f64> {
        self.snr
    }

    pub fn ra_deg(&self) -> Option<f64> {
        self.ra_deg
    }

    pub fn dec_deg(&self) -> Option<f64> {
        self.dec_deg
    }

    pub fn len(&self) -> usize {
        self.wavelength.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelength.is_empty()
    }

    /// Full wavelength extent `[first λ, last λ]`.
    pub fn full_range(&self) -> WavelengthRange {
        // a single-sample slice yields a point interval
        WavelengthRange {
            min: self.wavelength[0],
            max: self.wavelength[self.wavelength.len() - 1],
        }
    }

    pub fn into_parts(self) -> SpectrumParts {
        SpectrumParts {
            id: self.id,
            survey: self.survey,
            wavelength: self.wavelength,
            flux: self.flux,
            label: self.label,
            snr: self.snr,
            ra_deg: self.ra_deg,
            dec_deg: self.dec_deg,
        }
    }

    /// Copy of this spectrum with a different label (used when a survey
    /// spectrum is relabelled for a specific task).
    pub fn with_label(&self, label: Option<TaskLabel>) -> Spectrum {
        Spectrum {
            label,
            ..self.clone()
        }
    }

    /// Parse the canonical JSON text. Bare `NaN` / `Infinity` tokens, which
    /// some writers emit, are reported as [`SpectrumError::NonFiniteValue`].
    pub fn from_json(text: &str) -> Result<Self, SpectrumError> {
        let sanitized = replace_nonfinite_tokens(text);
        let file: SpectrumFile = serde_json::from_str(&sanitized)
            .map_err(|e| SpectrumError::MalformedFile(e.to_string()))?;
        let wavelength = unwrap_values("wavelength", file.wavelength)?;
        let flux = unwrap_values("flux", file.flux)?;
        Spectrum::new(SpectrumParts {
            id: file.id,
            survey: file.survey,
            wavelength,
            flux,
            label: file.label,
            snr: file.snr,
            ra_deg: file.ra_deg,
            dec_deg: file.dec_deg,
        })
    }

    /// Canonical single-line JSON encoding.
    pub fn to_json(&self) -> String {
        let file = SpectrumFile {
            id: self.id.clone(),
            survey: self.survey,
            wavelength: self.wavelength.iter().copied().map(Some).collect(),
            flux: self.flux.iter().copied().map(Some).collect(),
            label: self.label,
            snr: self.snr,
            ra_deg: self.ra_deg,
            dec_deg: self.dec_deg,
        };
        serde_json::to_string(&file).expect("spectrum serialization is infallible")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SpectrumError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| SpectrumError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn unwrap_values(field: &'static str, values: Vec<Option<f64>>) -> Result<Vec<f64>, SpectrumError> {
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| v.ok_or(SpectrumError::NonFiniteValue { field, index }))
        .collect()
}

/// Rewrites `NaN`, `Infinity` and `-Infinity` tokens outside string literals to `null`.
fn replace_nonfinite_tokens(text: &str) -> String {
    const TOKENS: [&str; 4] = ["-Infinity", "Infinity", "-NaN", "NaN"];
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if in_string {
            if escaped {
                escaped = false;
            } else if c == b'\\' {
                escaped = true;
            } else if c == b'"' {
                in_string = false;
            }
        } else if c == b'"' {
            in_string = true;
        } else if let Some(tok) = TOKENS.iter().find(|t| text[i..].starts_with(**t)) {
            out.push_str("null");
            i += tok.len();
            continue;
        }
        let ch_len = utf8_len(c);
        out.push_str(&text[i..i + ch_len]);
        i += ch_len;
    }
    out
}

fn utf8_len(first: u8) -> usize {
    match first {
        0x00..=0x7F => 1,
        0xC0..=0xDF => 2,
        0xE0..=0xEF => 3,
        _ => 4,
    }
}

/// Read and validate a `.specvi.json` file.
pub fn load_spectrum(path: impl AsRef<Path>) -> Result<Spectrum, SpectrumError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SpectrumError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Spectrum::from_json(&text)
}

/// Sub-spectrum of all samples with `min ≤ λ ≤ max`. Metadata is carried over.
/// The result may hold a single sample.
pub fn slice(spec: &Spectrum, range: &WavelengthRange) -> Result<Spectrum, SpectrumError> {
    let wl = spec.wavelength();
    let start = wl.partition_point(|&l| l < range.min());
    let end = wl.partition_point(|&l| l <= range.max());
    if start >= end {
        return Err(SpectrumError::EmptySlice {
            min: range.min(),
            max: range.max(),
        });
    }
    Ok(Spectrum {
        id: spec.id.clone(),
        survey: spec.survey,
        wavelength: wl[start..end].to_vec(),
        flux: spec.flux[start..end].to_vec(),
        label: spec.label,
        snr: spec.snr,
        ra_deg: spec.ra_deg,
        dec_deg: spec.dec_deg,
    })
}

/// Median of a slice; the mean of the two middle values for even lengths.
/// Returns `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Centered moving median; the window is clipped at both ends of the array.
pub fn moving_median(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            median(&values[lo..hi]).expect("window is never empty")
        })
        .collect()
}

/// Robust SNR: `median(flux) / (1.4826 · MAD(flux − moving_median(flux, 21)))`.
///
/// A zero numerator over a zero denominator gives 0. A zero denominator with
/// positive median gives [`SNR_CAP`]; larger values are clamped to the cap and
/// negative ones to 0.
pub fn estimate_snr(spec: &Spectrum) -> Result<f64, SpectrumError> {
    let flux = spec.flux();
    if flux.len() < SNR_MIN_SAMPLES {
        return Err(SpectrumError::TooShort {
            len: flux.len(),
            min: SNR_MIN_SAMPLES,
        });
    }
    let signal = median(flux).expect("non-empty");
    let baseline = moving_median(flux, SNR_WINDOW);
    let residual: Vec<f64> = flux.iter().zip(&baseline).map(|(f, b)| f - b).collect();
    let center = median(&residual).expect("non-empty");
    let deviations: Vec<f64> = residual.iter().map(|r| (r - center).abs()).collect();
    let noise = MAD_TO_SIGMA * median(&deviations).expect("non-empty");
    if noise == 0.0 {
        return Ok(if signal > 0.0 { SNR_CAP } else { 0.0 });
    }
    Ok((signal / noise).clamp(0.0, SNR_CAP))
}

/// Mean flux per equal-width bin over `[lo, hi]`, then divided by the median
/// of the bin vector. Empty bins hold 0; a zero median leaves the vector as is.
pub fn bin_features(
    spec: &Spectrum,
    n_bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Vec<f64>, SpectrumError> {
    if n_bins == 0 {
        return Err(SpectrumError::InvalidBinning("n_bins must be ≥ 1".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(SpectrumError::InvalidBinning(format!(
            "need lo < hi, got [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&l, &f) in spec.wavelength().iter().zip(spec.flux()) {
        if l < lo || l > hi {
            continue;
        }
        let idx = (((l - lo) / width) as usize).min(n_bins - 1);
        sums[idx] += f;
        counts[idx] += 1;
    }
    let mut features: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    let m = median(&features).expect("n_bins ≥ 1");
    if m != 0.0 {
        features.iter_mut().for_each(|v| *v /= m);
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spectrum(wavelength: Vec<f64>, flux: Vec<f64>) -> Spectrum {
        Spectrum::new(SpectrumParts {
            id: "t".into(),
            survey: Survey::Synthetic,
            wavelength,
            flux,
            label: None,
            snr: None,
            ra_deg: None,
            dec_deg: None,
        })
        .unwrap()
    }

    fn grid(lo: usize, hi: usize) -> Vec<f64> {
        (lo..=hi).map(|v| v as f64).collect()
    }

    #[test]
    fn loads_minimal_file() {
        let s = Spectrum::from_json(
            r#"{"id":"a","survey":"LAMOST","wavelength":[4000,5000,6000],"flux":[1.0,2.0,1.5]}"#,
        )
        .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.survey(), Survey::Lamost);
    }

    #[test]
    fn rejects_descending_wavelength() {
        let err = Spectrum::from_json(
            r#"{"id":"a","survey":"SDSS","wavelength":[5000,4000],"flux":[1,1]}"#,
        )
        .unwrap_err();
        assert_eq!(err, SpectrumError::NonMonotonicWavelength { index: 1 });
    }

    #[test]
    fn rejects_nan_flux() {
        let err = Spectrum::from_json(
            r#"{"id":"a","survey":"SDSS","wavelength":[4000,5000,6000],"flux":[1, NaN, 2]}"#,
        )
        .unwrap_err();
        assert_eq!(
            err,
            SpectrumError::NonFiniteValue {
                field: "flux",
                index: 1
            }
        );
        // a NaN inside a string literal is left alone
        let s = Spectrum::from_json(
            r#"{"id":"NaN-Infinity","survey":"DESI","wavelength":[1,2],"flux":[1,2]}"#,
        )
        .unwrap();
        assert_eq!(s.id(), "NaN-Infinity");
    }

    #[test]
    fn rejects_schema_violations() {
        for text in [
            r#"{"id":"a","survey":"LAMOST","wavelength":[1,2,3],"flux":[1,2]}"#,
            r#"{"id":"a","survey":"HST","wavelength":[1,2],"flux":[1,2]}"#,
            r#"{"id":"a","survey":"LAMOST","wavelength":[1],"flux":[1]}"#,
            r#"{"id":"a","survey":"LAMOST","flux":[1,2]}"#,
            r#"{"id":"a","survey":"LAMOST","wavelength":[1,2],"flux":[1,2],"label":{"task":"QSO","is_positive":true}}"#,
        ] {
            assert!(
                matches!(Spectrum::from_json(text), Err(SpectrumError::MalformedFile(_))),
                "{text}"
            );
        }
        let err = Spectrum::from_json(
            r#"{"id":"a","survey":"LAMOST","wavelength":[1,2],"flux":[1,2],"ra_deg":360}"#,
        )
        .unwrap_err();
        assert!(matches!(err, SpectrumError::CoordinateOutOfRange { field: "ra_deg", .. }));
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let s = Spectrum::new(SpectrumParts {
            id: "x".into(),
            survey: Survey::Lamost,
            wavelength: vec![4000.5, 4001.25],
            flux: vec![0.1, 0.2],
            label: Some(TaskLabel {
                task: Task::Cv,
                is_positive: true,
            }),
            snr: Some(12.5),
            ra_deg: Some(10.0),
            dec_deg: Some(-5.0),
        })
        .unwrap();
        let text = s.to_json();
        assert!(!text.contains('\n'));
        assert!(text.starts_with(r#"{"id":"x","survey":"LAMOST","wavelength":[4000.5,4001.25]"#));
        assert_eq!(Spectrum::from_json(&text).unwrap(), s);
    }

    #[test]
    fn slice_counts_inclusive_bounds() {
        let s = spectrum(grid(4000, 9000), vec![1.0; 5001]);
        let r = WavelengthRange::new(6400.0, 6700.0).unwrap();
        // enumeration oracle
        let expected = s.wavelength().iter().filter(|&&l| (6400.0..=6700.0).contains(&l)).count();
        assert_eq!(expected, 301);
        assert_eq!(slice(&s, &r).unwrap().len(), expected);
    }

    #[test]
    fn full_slice_is_identity_and_disjoint_is_empty() {
        let s = spectrum(grid(4000, 9000), (0..5001).map(|i| i as f64).collect());
        assert_eq!(slice(&s, &s.full_range()).unwrap(), s);
        let err = slice(&s, &WavelengthRange::new(100.0, 200.0).unwrap()).unwrap_err();
        assert!(matches!(err, SpectrumError::EmptySlice { .. }));
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(WavelengthRange::new(10.0, 10.0).is_err());
        assert!(WavelengthRange::new(-1.0, 10.0).is_err());
        assert!(WavelengthRange::new(1.0, f64::INFINITY).is_err());
        assert!(serde_json::from_str::<WavelengthRange>("[5, 3]").is_err());
    }

    #[test]
    fn snr_of_constant_flux_is_capped() {
        let s = spectrum(grid(1, 100), vec![5.0; 100]);
        assert_eq!(estimate_snr(&s).unwrap(), SNR_CAP);
        let zero = spectrum(grid(1, 100), vec![0.0; 100]);
        assert_eq!(estimate_snr(&zero).unwrap(), 0.0);
    }

    #[test]
    fn snr_alternating_flux_matches_frozen_value() {
        // Frozen from an independent numpy evaluation of the estimator
        // (clipped centered window of 21): only the 10 edge residuals are
        // non-zero, so the MAD is 0 and the noiseless cap applies.
        let flux: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 11.0 } else { 9.0 }).collect();
        let s = spectrum(grid(1, 100), flux);
        assert_eq!(estimate_snr(&s).unwrap(), SNR_CAP);
    }

    #[test]
    fn snr_noisy_flux_matches_frozen_value() {
        // flux_i = 10 + 3·sin(1.7·i²) on 200 samples; value frozen from numpy.
        let flux: Vec<f64> = (0..200)
            .map(|i| {
                let x = i as f64;
                10.0 + 3.0 * (1.7 * x * x).sin()
            })
            .collect();
        let s = spectrum(grid(1, 200), flux);
        let snr = estimate_snr(&s).unwrap();
        assert!((snr - SNR_NOISY_FROZEN).abs() < 1e-9, "{snr}");
    }

    const SNR_NOISY_FROZEN: f64 = 3.9383672864946626;

    #[test]
    fn snr_requires_21_samples() {
        let s = spectrum(grid(1, 10), vec![1.0; 10]);
        assert_eq!(
            estimate_snr(&s).unwrap_err(),
            SpectrumError::TooShort { len: 10, min: 21 }
        );
    }

    #[test]
    fn bin_features_examples() {
        let flat = spectrum(grid(4000, 6000), vec![2.0; 2001]);
        assert!(bin_features(&flat, 7, 4000.0, 6000.0).unwrap().iter().all(|&v| v == 1.0));

        let wl: Vec<f64> = vec![4100.0, 4500.0, 4900.0, 5100.0, 5500.0, 5900.0];
        let flux = vec![1.0, 1.0, 1.0, 3.0, 3.0, 3.0];
        let s = spectrum(wl, flux);
        assert_eq!(bin_features(&s, 2, 4000.0, 6000.0).unwrap(), vec![0.5, 1.5]);

        // bins 3 and 4 of [4000, 6000]/4 are empty; median of [2,2,0,0] is 1
        let s = spectrum(vec![4100.0, 4600.0], vec![2.0, 2.0]);
        assert_eq!(bin_features(&s, 4, 4000.0, 6000.0).unwrap(), vec![2.0, 2.0, 0.0, 0.0]);

        assert!(bin_features(&s, 0, 4000.0, 6000.0).is_err());
        assert!(bin_features(&s, 2, 6000.0, 4000.0).is_err());
    }

    #[test]
    fn unknown_task_rejected() {
        assert!("QSO".parse::<Task>().is_err());
        assert_eq!("WD".parse::<Task>().unwrap(), Task::Wd);
        assert!(serde_json::from_str::<TaskLabel>(r#"{"task":"cv","is_positive":true}"#).is_err());
    }
}
