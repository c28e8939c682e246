//! Semigroup property of the closed-form kernels under numerical convolution.

use std::f64::consts::PI;

use bundleheat::oracle::{halfspace_neumann_kernel, hemisphere_kernel, QuadratureGrid};
use bundleheat::{Chart, ModelGeometry, Point};

#[test]
fn hemisphere_series_is_a_semigroup() {
    let geom = ModelGeometry::Hemisphere;
    let grid = QuadratureGrid::boxed(&geom, &[1e-9, -PI], &[PI / 2.0, PI], &[24, 32], 8);
    let pairs = [([0.3, 0.2], [1.2, -2.0]), ([1.5, 0.0], [0.9, 1.0]), ([0.7, -1.0], [0.7, 1.0])];
    for (a, b) in pairs {
        let (x, y) = (Point::new(Chart::Polar, &a), Point::new(Chart::Polar, &b));
        let composed = grid.integrate(|z| hemisphere_kernel(0.3, &x, z).unwrap() * hemisphere_kernel(0.2, z, &y).unwrap());
        let direct = hemisphere_kernel(0.5, &x, &y).unwrap();
        assert!((composed - direct).abs() < 1e-4, "{a:?} -> {b:?}: {composed} vs {direct}");
    }
}

#[test]
fn half_plane_images_kernel_is_a_semigroup() {
    let geom = ModelGeometry::half_space(2).unwrap();
    let grid = QuadratureGrid::boxed(&geom, &[-7.0, 0.0], &[7.0, 7.0], &[28, 14], 8);
    for (x, y) in [([0.0, 0.2], [0.5, 0.7]), ([-0.4, 0.0], [0.3, 1.1])] {
        let composed = grid.integrate(|z| {
            halfspace_neumann_kernel(0.4, &x, z.coords()).unwrap() * halfspace_neumann_kernel(0.6, z.coords(), &y).unwrap()
        });
        let direct = halfspace_neumann_kernel(1.0, &x, &y).unwrap();
        assert!((composed - direct).abs() < 1e-4, "{composed} vs {direct}");
    }
}
