use fogbench::lidar::{Lidar, LidarConfig};
use fogbench::scene::{alpha_from_mor, Aabb, FogField, Pose, Pose3, Primitive, Scene, Shape, VoxelGrid};
use fogbench::Vec3;
use proptest::prelude::*;

fn bounds() -> Aabb {
    Aabb::new(Vec3::new(-200.0, -200.0, -10.0), Vec3::new(200.0, 200.0, 50.0))
}

fn unit(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin())
}

fn boxes(n: usize, seed: f64) -> Vec<Primitive> {
    (0..n)
        .map(|i| {
            let a = seed + i as f64 * 0.9;
            let d = 6.0 + 3.0 * i as f64;
            Primitive::new(
                Shape::OrientedBox {
                    half_extents: Vec3::new(1.0 + 0.1 * i as f64, 0.8, 1.0),
                },
                Pose::new(d * a.cos(), d * a.sin(), 0.0, a),
                0.2 + 0.05 * i as f64,
                Some(i as u32 + 1),
            )
            .unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn voxel_sum_converges_to_path_integral(
        mor in 10.0f64..300.0,
        dr in 0.25f64..2.0,
        theta in 0.0f64..std::f64::consts::TAU,
        phi in -0.3f64..0.3,
        frac in 0.0f64..1.0,
    ) {
        let alpha = alpha_from_mor(mor);
        let grid = VoxelGrid::filled([100, 100, 20], Vec3::new(-50.0, -50.0, -10.0) * dr, dr, alpha).unwrap();
        let big = Aabb::new(Vec3::new(-300.0, -300.0, -300.0), Vec3::new(300.0, 300.0, 300.0));
        let scene = Scene::new(vec![], FogField::voxel(grid), big).unwrap();
        let origin = Vec3::new(0.3, -0.2, 0.1) * dr;
        let dir = unit(theta, phi);
        // Stay inside the grid, which reaches 10 voxels up and down, 50 across.
        let r = (frac * 9.0 * dr / phi.sin().abs()).min(frac * 45.0 * dr);
        let p = scene.path_attenuation_sum(&origin, &dir, r).unwrap();
        prop_assert!(!p.clamped);
        prop_assert!((p.optical_depth() - alpha * r).abs() <= alpha * dr + 1e-12);
    }

    #[test]
    fn transmission_never_increases(mor in 5.0f64..500.0, theta in 0.0f64..6.28, steps in 2usize..40) {
        let scene = Scene::new(vec![], FogField::from_mor(mor), bounds()).unwrap();
        let dir = unit(theta, 0.0);
        let mut last = 1.0;
        for k in 0..steps {
            let t = scene.path_attenuation_sum(&Vec3::new(0.0, 0.0, 1.0), &dir, 2.5 * k as f64).unwrap().transmission();
            prop_assert!(t <= last && t > 0.0);
            last = t;
        }
    }

    #[test]
    fn raycast_ignores_primitive_order(seed in 0.0f64..6.28, n in 1usize..7, theta in 0.0f64..6.28, phi in -0.4f64..0.2) {
        let prims = boxes(n, seed);
        let mut rev = prims.clone();
        rev.reverse();
        let a = Scene::new(prims, FogField::clear(), bounds()).unwrap();
        let b = Scene::new(rev, FogField::clear(), bounds()).unwrap();
        let (o, d) = (Vec3::new(0.0, 0.0, 1.2), unit(theta, phi));
        prop_assert_eq!(a.raycast(&o, &d, 80.0).unwrap(), b.raycast(&o, &d, 80.0).unwrap());
    }
}

#[test]
fn scans_are_deterministic() {
    let mut prims = boxes(5, 0.3);
    prims.push(Primitive::new(Shape::GroundPlane, Pose::new(0.0, 0.0, 0.0, 0.0), 0.4, None).unwrap());
    let scene = Scene::new(prims, FogField::from_mor(40.0), bounds()).unwrap();
    let lidar = Lidar::new(LidarConfig::default()).unwrap();
    let pose = Pose3::new(Vec3::new(0.0, 0.0, 1.9), 0.1, 0.0, 0.0);
    let a = lidar.scan(&scene, &pose, 3);
    let b = lidar.scan(&scene, &pose, 3);
    assert_eq!(a, b);
    assert!(a.points.iter().any(|p| p.provenance.is_fog()));
    assert!(a.points.iter().any(|p| !p.provenance.is_fog()));
}
