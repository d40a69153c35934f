use std::fs;
use std::sync::Arc;

use petbench_core::energy::{
    open_meter, write_fixture, BackendTag, DomainKind, EnergyError, ManualClock, MeterBackend,
};
use proptest::prelude::*;

#[test]
fn fixture_tree_enumerates_package_and_dram() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 1000, 10, 1_000_000).unwrap();
    // core zones and unrelated entries are skipped
    let core = dir.path().join("intel-rapl:0/intel-rapl:0:1");
    fs::create_dir_all(&core).unwrap();
    fs::write(core.join("name"), "core\n").unwrap();
    fs::create_dir_all(dir.path().join("intel-rapl")).unwrap();

    let m = open_meter(&MeterBackend::PowercapSysfs { root: dir.path().to_owned() }).unwrap();
    assert_eq!(
        m.domains(),
        vec![("package-0".to_owned(), DomainKind::Package), ("dram".to_owned(), DomainKind::Memory)]
    );
    assert_eq!(m.backend(), BackendTag::Powercap);
}

#[test]
fn empty_root_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let err = open_meter(&MeterBackend::PowercapSysfs { root: dir.path().to_owned() }).err().unwrap();
    assert!(matches!(err, EnergyError::UnsupportedPlatform { .. }));
    assert!(err.to_string().contains("simulated"));
    let missing = dir.path().join("nope");
    assert!(matches!(
        open_meter(&MeterBackend::PowercapSysfs { root: missing }),
        Err(EnergyError::UnsupportedPlatform { .. })
    ));
}

#[test]
fn counter_wrap_is_corrected() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 999_900, 500, 1_000_000).unwrap();
    let m = open_meter(&MeterBackend::PowercapSysfs { root: dir.path().to_owned() }).unwrap();
    let ((), s) = m
        .measure("train", || {
            fs::write(dir.path().join("intel-rapl:0/energy_uj"), "150\n").unwrap();
            fs::write(dir.path().join("intel-rapl:0/intel-rapl:0:0/energy_uj"), "1500\n").unwrap();
        })
        .unwrap();
    assert!(s.wrap_corrected);
    assert!((s.domains[0].joules - 250e-6).abs() < 1e-15);
    assert!((s.domains[1].joules - 1000e-6).abs() < 1e-15);
    assert_eq!(s.joules, s.domains.iter().map(|d| d.joules).sum::<f64>());

    let ((), still) = m.measure("noop", || ()).unwrap();
    assert_eq!(still.joules, 0.0);
    assert!(!still.wrap_corrected);
}

#[test]
fn garbage_counter_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 1, 1, 100).unwrap();
    fs::write(dir.path().join("intel-rapl:0/energy_uj"), "lots\n").unwrap();
    assert!(matches!(
        open_meter(&MeterBackend::PowercapSysfs { root: dir.path().to_owned() }),
        Err(EnergyError::BadCounter { .. })
    ));
}

#[test]
fn env_var_selects_root() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 5, 5, 100).unwrap();
    // only this test touches the variable
    unsafe { std::env::set_var("PET_RAPL_ROOT", dir.path()) };
    let backend = MeterBackend::powercap_from_env();
    unsafe { std::env::remove_var("PET_RAPL_ROOT") };
    match &backend {
        MeterBackend::PowercapSysfs { root } => assert_eq!(root, dir.path()),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(open_meter(&backend).unwrap().domains().len(), 2);
}

proptest! {
    #[test]
    fn simulated_measurements_add_up(watts in 0.0f64..200.0, a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let clock = ManualClock::new();
        let m = open_meter(&MeterBackend::simulated(watts, Arc::new(clock.clone()))).unwrap();
        let ((), sa) = m.measure("a", || clock.advance(a)).unwrap();
        let ((), sb) = m.measure("b", || clock.advance(b)).unwrap();
        let ((), sab) = m.measure("ab", || { clock.advance(a); clock.advance(b); }).unwrap();
        prop_assert!((sa.joules + sb.joules - sab.joules).abs() < 1e-9);
        prop_assert!(sa.joules >= 0.0 && sa.duration_s >= 0.0);
    }

    #[test]
    fn nested_measure_always_errors(depth in 1usize..4) {
        let clock = ManualClock::new();
        let m = open_meter(&MeterBackend::simulated(1.0, Arc::new(clock))).unwrap();
        fn nest(m: &petbench_core::energy::Meter, depth: usize) -> Result<(), EnergyError> {
            m.measure("lvl", || if depth > 0 { nest(m, depth - 1) } else { Ok(()) })?.0
        }
        prop_assert!(matches!(nest(&m, depth), Err(EnergyError::SessionOverlap)));
        prop_assert!(m.measure("after", || ()).is_ok());
    }
}
