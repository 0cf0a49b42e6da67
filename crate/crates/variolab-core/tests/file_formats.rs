use variolab_core::fields::{read_field, write_field, Field2D, Lattice2D};
use variolab_core::kernels::{build_chi, Kernel1D, KernelGrid};
use variolab_core::VarioError;

#[test]
fn fields_round_trip_on_every_lattice_kind() {
    let dir = tempfile::tempdir().unwrap();
    for (i, lattice) in [
        Lattice2D::torus(5, 3).unwrap(),
        Lattice2D::window(4, 6, 0.25).unwrap(),
        Lattice2D::periodic_window(7, 2, 0.5).unwrap(),
    ]
    .into_iter()
    .enumerate()
    {
        let field = Field2D::from_fn(lattice, |k, l| (k as f64 + 0.1) * (l as f64 - 1.7)).unwrap();
        let path = dir.path().join(format!("f{i}.field"));
        write_field(&path, &field).unwrap();
        assert_eq!(read_field(&path).unwrap(), field);
    }
}

#[test]
fn truncated_field_is_a_format_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.field");
    write_field(&path, &Field2D::zeros(Lattice2D::torus(4, 4).unwrap())).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let err = read_field(&path).unwrap_err();
    assert!(matches!(err, VarioError::Format { .. }));
    assert!(err.to_string().contains("short.field"));
}

#[test]
fn kernel_file_round_trip_preserves_samples() {
    let dir = tempfile::tempdir().unwrap();
    let chi = build_chi(KernelGrid::default()).unwrap();
    let path = dir.path().join("chi.kernel");
    chi.write_file(&path).unwrap();
    let back = Kernel1D::read_file(&path).unwrap();
    for s in [-1.5, -0.3, 0.0, 0.123, 0.9, 2.0] {
        assert_eq!(back.eval(s).to_bits(), chi.eval(s).to_bits());
    }
}
