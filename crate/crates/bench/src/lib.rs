//! Shared fixtures for the benchmarks.

use bundleheat::estimators::Setup;
use bundleheat::{BundleModel, EnsembleConfig, LocalTimeScheme, ModelGeometry, Point, StepConfig};

/// A named geometry, bundle and start point.
pub struct Case {
    pub name: &'static str,
    pub bundle: BundleModel,
    pub start: Point,
}

pub fn cases() -> Vec<Case> {
    let hs = ModelGeometry::half_space(2).expect("dimension 2 is supported");
    let disk = ModelGeometry::DiskExterior;
    let hemi = ModelGeometry::Hemisphere;
    vec![
        Case {
            name: "half_space_scalar",
            bundle: BundleModel::scalar(hs),
            start: hs.point(&[0.0, 0.3]).unwrap(),
        },
        Case {
            name: "half_space_forms",
            bundle: BundleModel::forms_with_potential(hs, 1, 2.0).unwrap(),
            start: hs.point(&[0.0, 0.3]).unwrap(),
        },
        Case {
            name: "disk_forms",
            bundle: BundleModel::forms(disk, 1).unwrap(),
            start: disk.point(&[1.1, 0.0]).unwrap(),
        },
        Case {
            name: "hemisphere_forms",
            bundle: BundleModel::forms(hemi, 1).unwrap(),
            start: hemi.point(&[1.2, 0.0]).unwrap(),
        },
    ]
}

pub fn setup(bundle: BundleModel, paths: usize, dt: f64) -> Setup {
    let mut ens = EnsembleConfig::new(paths, StepConfig::new(dt, LocalTimeScheme::OnestepExact, 1));
    ens.threads = 1;
    Setup::new(bundle, ens)
}
