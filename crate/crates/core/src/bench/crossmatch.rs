//! Positional cross-matching on the celestial sphere.

use serde::{Deserialize, Serialize};

use super::splits::BenchItem;
use super::{spectrum_path, BenchError};
use crate::spectrum::Spectrum;

pub const DEFAULT_RADIUS_ARCSEC: f64 = 3.0;
/// Slack absorbing rounding in the separation so a radius is inclusive.
const RADIUS_SLACK_ARCSEC: f64 = 1e-9;
const ARCSEC_PER_RAD: f64 = 180.0 * 3600.0 / std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkyPoint {
    pub id: String,
    pub ra_deg: f64,
    pub dec_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkyMatch {
    pub source_id: String,
    pub target_id: String,
    pub separation_arcsec: f64,
}

impl SkyPoint {
    pub fn from_spectrum(spec: &Spectrum) -> Result<Self, BenchError> {
        match (spec.ra_deg(), spec.dec_deg()) {
            (Some(ra), Some(dec)) => Ok(SkyPoint { id: spec.id().to_string(), ra_deg: ra, dec_deg: dec }),
            _ => Err(BenchError::MissingCoordinates(spec.id().to_string())),
        }
    }
}

/// Great-circle separation in arcseconds (haversine form).
pub fn separation_arcsec(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> f64 {
    let (p1, p2) = (dec1.to_radians(), dec2.to_radians());
    let dp = p2 - p1;
    let dl = (ra2 - ra1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin() * ARCSEC_PER_RAD
}

/// Nearest target within `radius_arcsec` for each source. Ties go to the
/// lexicographically smaller target id.
pub fn cross_match(
    sources: &[SkyPoint],
    targets: &[SkyPoint],
    radius_arcsec: f64,
) -> Result<Vec<SkyMatch>, BenchError> {
    if !(radius_arcsec.is_finite() && radius_arcsec > 0.0) {
        return Err(BenchError::InvalidParameter(format!(
            "radius must be > 0, got {radius_arcsec}"
        )));
    }
    let radius_deg = (radius_arcsec + RADIUS_SLACK_ARCSEC) / 3600.0;
    let mut out = Vec::new();
    for s in sources {
        let mut best: Option<(&SkyPoint, f64)> = None;
        for t in targets {
            if (t.dec_deg - s.dec_deg).abs() > radius_deg {
                continue;
            }
            let sep = separation_arcsec(s.ra_deg, s.dec_deg, t.ra_deg, t.dec_deg);
            if sep > radius_arcsec + RADIUS_SLACK_ARCSEC {
                continue;
            }
            let better = match best {
                None => true,
                Some((b, bsep)) => sep < bsep || (sep == bsep && t.id < b.id),
            };
            if better {
                best = Some((t, sep));
            }
        }
        if let Some((t, sep)) = best {
            out.push(SkyMatch {
                source_id: s.id.clone(),
                target_id: t.id.clone(),
                separation_arcsec: sep,
            });
        }
    }
    Ok(out)
}

pub fn cross_match_spectra(
    sources: &[Spectrum],
    targets: &[Spectrum],
    radius_arcsec: f64,
) -> Result<Vec<SkyMatch>, BenchError> {
    let s: Vec<_> = sources.iter().map(SkyPoint::from_spectrum).collect::<Result<_, _>>()?;
    let t: Vec<_> = targets.iter().map(SkyPoint::from_spectrum).collect::<Result<_, _>>()?;
    cross_match(&s, &t, radius_arcsec)
}

/// Re-points matched items at their counterpart spectra in another survey,
/// keeping task, gold label, split and prompt.
pub fn rebind_items(items: &[BenchItem], matches: &[SkyMatch], tag: &str) -> Vec<BenchItem> {
    items
        .iter()
        .filter_map(|item| {
            let m = matches.iter().find(|m| m.source_id == item.spectrum_id)?;
            Some(BenchItem {
                item_id: format!("{}@{}", item.item_id, tag),
                spectrum_id: m.target_id.clone(),
                spectrum_path: spectrum_path(&m.target_id),
                provenance: format!("cross-match {} {:.3}\"", item.spectrum_id, m.separation_arcsec),
                ..item.clone()
            })
        })
        .collect()
}
