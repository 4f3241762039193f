//! Cross-module structural properties of the tensor kernels.

use igkit_core::conv::conv2d;
use igkit_core::fgrep::{apply_transform, DIHEDRAL};
use igkit_core::{Rng, Tensor};

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let mut data = vec![0.0; shape.iter().product()];
    rng.fill_normal(&mut data, 1.0);
    Tensor::from_vec(shape, data).unwrap()
}

/// Zero padding commutes with the dihedral group:
/// A(x) * K == A(x * A^{-1}(K)) for all eight transforms. This is the
/// algebraic fact the kernel re-parameterization rests on.
#[test]
fn convolution_commutes_with_dihedral_transforms() {
    let mut rng = Rng::new(950);
    for &k in &[1usize, 3, 5] {
        let x = random(&[1, 2, 6, 6], &mut rng);
        let kernel = random(&[3, 2, k, k], &mut rng);
        let pad = (k - 1) / 2;
        for t in DIHEDRAL {
            let lhs = conv2d(&apply_transform(t, &x), &kernel, pad).unwrap();
            let inner = conv2d(&x, &apply_transform(t.inverse(), &kernel), pad).unwrap();
            let rhs = apply_transform(t, &inner);
            assert_eq!(lhs.shape(), rhs.shape());
            for (a, b) in lhs.data().iter().zip(rhs.data()) {
                let scale = a.abs().max(b.abs()).max(1.0);
                assert!((a - b).abs() / scale < 1e-13, "t = {t:?}, k = {k}: {a} vs {b}");
            }
        }
    }
}

/// The same fact on a non-square map, where rotations transpose the
/// spatial extents.
#[test]
fn dihedral_commutation_holds_on_rectangles() {
    let mut rng = Rng::new(951);
    let x = random(&[1, 3, 4, 7], &mut rng);
    let kernel = random(&[2, 3, 3, 3], &mut rng);
    for t in DIHEDRAL {
        let lhs = conv2d(&apply_transform(t, &x), &kernel, 1).unwrap();
        let rhs = apply_transform(t, &conv2d(&x, &apply_transform(t.inverse(), &kernel), 1).unwrap());
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

/// Composing all pairs of transforms never leaves the group, and the
/// inverse table is consistent with composition on tensors.
#[test]
fn dihedral_inverse_table_is_consistent() {
    let mut rng = Rng::new(952);
    let x = random(&[2, 1, 3, 5], &mut rng);
    for t in DIHEDRAL {
        let forth = apply_transform(t, &x);
        let back = apply_transform(t.inverse(), &forth);
        assert_eq!(back.shape(), x.shape());
        assert_eq!(back.to_vec(), x.to_vec());
        assert_eq!(t.inverse().inverse(), t);
    }
}
