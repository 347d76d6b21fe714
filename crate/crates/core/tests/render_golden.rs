use sha2::{Digest, Sha256};
use specvi_core::tool::render_view;
use specvi_core::{Spectrum, SpectrumParts, Survey, WavelengthRange};

/// Flux built from integer arithmetic only, so the input is bit-identical on
/// every platform.
fn fixture() -> Spectrum {
    let n = 2551;
    Spectrum::new(SpectrumParts {
        id: "golden".into(),
        survey: Survey::Synthetic,
        wavelength: (0..n).map(|i| 3900.0 + 2.0 * i as f64).collect(),
        flux: (0..n)
            .map(|i| {
                let dip = if (1320..1340).contains(&i) { -40.0 } else { 0.0 };
                100.0 + ((i * 37) % 101) as f64 * 0.25 - i as f64 * 0.01 + dip
            })
            .collect(),
        label: None,
        snr: None,
        ra_deg: None,
        dec_deg: None,
    })
    .unwrap()
}

const GOLDEN: [(f64, f64, Option<&str>, &str); 3] = [
    (3900.0, 9000.0, None, "db3cb478678568a6bfb10dd5f2ae65f0070090d6fa2b13f7a504c0a723158723"),
    (6400.0, 6700.0, Some("Halpha"), "a95bc46e6a8ddc2617986211f7e0aa83cf44dfb85f312e867dbeeec99f82f54f"),
    (6501.0, 6509.0, Some("narrow"), "43be2918de92da952a46ce6f8ba9292c53d609e495b373e4a63961a8144d6a10"),
];

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[test]
fn renders_match_committed_hashes() {
    let spec = fixture();
    for (lo, hi, label, want) in GOLDEN {
        let view = render_view(&spec, &WavelengthRange::new(lo, hi).unwrap(), label).unwrap();
        let got = sha256_hex(&view.image);
        assert_eq!(got, want, "render of {lo}-{hi} changed");
    }
}

#[test]
fn repeated_renders_are_identical() {
    let spec = fixture();
    let range = WavelengthRange::new(6400.0, 6700.0).unwrap();
    let first = render_view(&spec, &range, Some("Halpha")).unwrap().image;
    for _ in 0..20 {
        assert_eq!(render_view(&spec, &range, Some("Halpha")).unwrap().image, first);
    }
}
