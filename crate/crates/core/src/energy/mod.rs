//! Energy metering per pipeline phase.
//!
//! Two backends: RAPL counters read through the Linux powercap tree, and a
//! simulated constant-power source driven by an injectable clock. Package
//! counters are machine-global, so nothing else heavy should run while a
//! session is open.

mod clock;
pub mod powercap;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{Clock, ManualClock, SystemClock};
pub use powercap::{consumed_uj, CounterReading, Domain, DomainKind};

/// Idle draw measured on the reference machine, in watts.
pub const REFERENCE_IDLE_WATTS: f64 = 7.512;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("no RAPL powercap zones under {}; use the simulated backend or set PET_RAPL_ROOT", root.display())]
    UnsupportedPlatform { root: PathBuf },
    #[error(
        "permission denied reading {}; make the counters readable (e.g. chmod a+r .../energy_uj) or use the simulated backend",
        path.display()
    )]
    PermissionDenied { path: PathBuf },
    #[error("reading {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: not a counter value: {text:?}", path.display())]
    BadCounter { path: PathBuf, text: String },
    #[error("a measurement session is already active on this meter")]
    SessionOverlap,
    #[error("idle measurement needs at least 1 s, got {0} s")]
    IdleTooShort(f64),
    #[error("baseline from the {baseline} backend cannot adjust a {sample} sample")]
    BackendMismatch { sample: BackendTag, baseline: BackendTag },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendTag {
    Powercap,
    Simulated,
}

impl fmt::Display for BackendTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendTag::Powercap => "powercap",
            BackendTag::Simulated => "simulated",
        })
    }
}

#[derive(Clone)]
pub enum MeterBackend {
    PowercapSysfs { root: PathBuf },
    /// Constant draw: `watts` while measuring work, `idle_watts` during idle
    /// measurement.
    Simulated { watts: f64, idle_watts: f64, clock: Arc<dyn Clock> },
}

impl fmt::Debug for MeterBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeterBackend::PowercapSysfs { root } => f.debug_struct("PowercapSysfs").field("root", root).finish(),
            MeterBackend::Simulated { watts, idle_watts, .. } => f
                .debug_struct("Simulated")
                .field("watts", watts)
                .field("idle_watts", idle_watts)
                .finish_non_exhaustive(),
        }
    }
}

impl MeterBackend {
    /// Powercap at `$PET_RAPL_ROOT`, or the standard sysfs location.
    pub fn powercap_from_env() -> Self {
        let root = std::env::var_os(powercap::ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(powercap::DEFAULT_ROOT));
        MeterBackend::PowercapSysfs { root }
    }

    /// Same draw when busy and idle.
    pub fn simulated(watts: f64, clock: Arc<dyn Clock>) -> Self {
        MeterBackend::Simulated { watts, idle_watts: watts, clock }
    }

    pub fn tag(&self) -> BackendTag {
        match self {
            MeterBackend::PowercapSysfs { .. } => BackendTag::Powercap,
            MeterBackend::Simulated { .. } => BackendTag::Simulated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEnergy {
    pub name: String,
    pub kind: DomainKind,
    pub joules: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub phase: String,
    /// Raw joules, the sum of `domains`.
    pub joules: f64,
    pub duration_s: f64,
    pub domains: Vec<DomainEnergy>,
    pub backend: BackendTag,
    pub wrap_corrected: bool,
    /// Set by [`adjust`].
    pub adjusted_joules: Option<f64>,
    pub idle_watts: Option<f64>,
    /// The idle term exceeded the raw energy and the result was clamped to 0.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdleBaseline {
    pub watts: f64,
    pub duration_s: f64,
    pub backend: BackendTag,
}

enum Source {
    Powercap { domains: Vec<Domain>, clock: SystemClock },
    Simulated { watts: f64, idle_watts: f64, clock: Arc<dyn Clock> },
}

/// An open meter. Only one measurement session may be active at a time.
pub struct Meter {
    source: Source,
    active: AtomicBool,
}

struct SessionGuard<'a>(&'a AtomicBool);

impl Drop for SessionGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

enum Start {
    Counters(Vec<CounterReading>, f64),
    Time(f64),
}

pub fn open_meter(backend: &MeterBackend) -> Result<Meter, EnergyError> {
    let source = match backend {
        MeterBackend::PowercapSysfs { root } => {
            Source::Powercap { domains: powercap::discover(root)?, clock: SystemClock::new() }
        }
        MeterBackend::Simulated { watts, idle_watts, clock } => {
            Source::Simulated { watts: *watts, idle_watts: *idle_watts, clock: Arc::clone(clock) }
        }
    };
    Ok(Meter { source, active: AtomicBool::new(false) })
}

impl Meter {
    pub fn backend(&self) -> BackendTag {
        match self.source {
            Source::Powercap { .. } => BackendTag::Powercap,
            Source::Simulated { .. } => BackendTag::Simulated,
        }
    }

    /// `(name, kind)` of each metered domain.
    pub fn domains(&self) -> Vec<(String, DomainKind)> {
        match &self.source {
            Source::Powercap { domains, .. } => domains.iter().map(|d| (d.name.clone(), d.kind)).collect(),
            Source::Simulated { .. } => vec![("package".to_owned(), DomainKind::Package)],
        }
    }

    pub fn clock(&self) -> &dyn Clock {
        match &self.source {
            Source::Powercap { clock, .. } => clock,
            Source::Simulated { clock, .. } => clock.as_ref(),
        }
    }

    fn begin(&self) -> Result<SessionGuard<'_>, EnergyError> {
        self.active
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| EnergyError::SessionOverlap)?;
        Ok(SessionGuard(&self.active))
    }

    fn start(&self) -> Result<Start, EnergyError> {
        Ok(match &self.source {
            Source::Powercap { domains, clock } => {
                let r = domains.iter().map(powercap::read).collect::<Result<Vec<_>, _>>()?;
                Start::Counters(r, clock.now())
            }
            Source::Simulated { clock, .. } => Start::Time(clock.now()),
        })
    }

    fn finish(&self, phase: &str, start: Start, idle: bool) -> Result<EnergySample, EnergyError> {
        let (domains, duration_s, wrap_corrected) = match (&self.source, start) {
            (Source::Powercap { domains, clock }, Start::Counters(before, t0)) => {
                let mut out = Vec::with_capacity(domains.len());
                let mut wrapped = false;
                for (d, b) in domains.iter().zip(before) {
                    let after = powercap::read(d)?;
                    let (uj, w) = consumed_uj(b.energy_uj, after.energy_uj, d.max_energy_uj);
                    wrapped |= w;
                    out.push(DomainEnergy { name: d.name.clone(), kind: d.kind, joules: uj as f64 * 1e-6 });
                }
                (out, (clock.now() - t0).max(0.0), wrapped)
            }
            (Source::Simulated { watts, idle_watts, clock }, Start::Time(t0)) => {
                let dt = (clock.now() - t0).max(0.0);
                let w = if idle { *idle_watts } else { *watts };
                (vec![DomainEnergy { name: "package".into(), kind: DomainKind::Package, joules: w * dt }], dt, false)
            }
            _ => unreachable!("start state matches the source"),
        };
        Ok(EnergySample {
            phase: phase.to_owned(),
            joules: domains.iter().map(|d| d.joules).sum(),
            duration_s,
            domains,
            backend: self.backend(),
            wrap_corrected,
            adjusted_joules: None,
            idle_watts: None,
            clamped: false,
        })
    }

    /// Run `work` and report the energy it used.
    pub fn measure<R>(&self, phase: &str, work: impl FnOnce() -> R) -> Result<(R, EnergySample), EnergyError> {
        let _guard = self.begin()?;
        let start = self.start()?;
        let out = work();
        let sample = self.finish(phase, start, false)?;
        Ok((out, sample))
    }

    /// Sleep for `duration_s` on the meter's clock and report average draw.
    pub fn measure_idle(&self, duration_s: f64) -> Result<IdleBaseline, EnergyError> {
        if !(duration_s >= 1.0) {
            return Err(EnergyError::IdleTooShort(duration_s));
        }
        let _guard = self.begin()?;
        let start = self.start()?;
        self.clock().sleep(duration_s);
        let sample = self.finish("idle", start, true)?;
        let watts = if sample.duration_s > 0.0 { sample.joules / sample.duration_s } else { 0.0 };
        Ok(IdleBaseline { watts, duration_s: sample.duration_s, backend: self.backend() })
    }
}

/// Subtract the idle draw over the sample's duration, clamping at zero.
/// The raw figure stays in `joules`.
pub fn adjust(sample: &EnergySample, baseline: &IdleBaseline) -> Result<EnergySample, EnergyError> {
    if sample.backend != baseline.backend {
        return Err(EnergyError::BackendMismatch { sample: sample.backend, baseline: baseline.backend });
    }
    let net = sample.joules - baseline.watts * sample.duration_s;
    let mut out = sample.clone();
    out.adjusted_joules = Some(net.max(0.0));
    out.idle_watts = Some(baseline.watts);
    out.clamped = net < 0.0;
    Ok(out)
}

/// Write a minimal powercap tree (one package zone with a `dram` subzone)
/// under `root`, for tests and dry runs.
pub fn write_fixture(root: &Path, package_uj: u64, dram_uj: u64, max_uj: u64) -> std::io::Result<()> {
    let pkg = root.join("intel-rapl:0");
    let dram = pkg.join("intel-rapl:0:0");
    std::fs::create_dir_all(&dram)?;
    for (dir, name, uj) in [(&pkg, "package-0", package_uj), (&dram, "dram", dram_uj)] {
        std::fs::write(dir.join("name"), format!("{name}\n"))?;
        std::fs::write(dir.join("energy_uj"), format!("{uj}\n"))?;
        std::fs::write(dir.join("max_energy_range_uj"), format!("{max_uj}\n"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(watts: f64) -> (Meter, ManualClock) {
        let clock = ManualClock::new();
        (open_meter(&MeterBackend::simulated(watts, Arc::new(clock.clone()))).unwrap(), clock)
    }

    #[test]
    fn simulated_half_second() {
        let (m, clock) = sim(10.0);
        assert_eq!(m.domains(), vec![("package".to_owned(), DomainKind::Package)]);
        let ((), s) = m.measure("train", || clock.advance(0.5)).unwrap();
        assert_eq!(s.joules, 5.0);
        assert_eq!(s.duration_s, 0.5);
        assert_eq!(s.phase, "train");
    }

    #[test]
    fn idle_baselines() {
        let (m, _) = sim(REFERENCE_IDLE_WATTS);
        let b = m.measure_idle(10.0).unwrap();
        assert!((b.watts - 7.512).abs() < 1e-12);
        assert_eq!(sim(0.0).0.measure_idle(1.0).unwrap().watts, 0.0);
        assert!(matches!(m.measure_idle(0.5), Err(EnergyError::IdleTooShort(_))));
    }

    fn sample(joules: f64, duration_s: f64) -> EnergySample {
        EnergySample {
            phase: "x".into(),
            joules,
            duration_s,
            domains: vec![DomainEnergy { name: "package".into(), kind: DomainKind::Package, joules }],
            backend: BackendTag::Simulated,
            wrap_corrected: false,
            adjusted_joules: None,
            idle_watts: None,
            clamped: false,
        }
    }

    #[test]
    fn adjust_examples() {
        let base = IdleBaseline { watts: 7.512, duration_s: 10.0, backend: BackendTag::Simulated };
        let a = adjust(&sample(100.0, 2.0), &base).unwrap();
        assert_eq!(a.adjusted_joules, Some(84.976));
        assert_eq!(a.joules, 100.0);
        assert!(!a.clamped);

        let zero = IdleBaseline { watts: 0.0, ..base };
        assert_eq!(adjust(&sample(3.0, 2.0), &zero).unwrap().adjusted_joules, Some(3.0));

        let c = adjust(&sample(1.0, 2.0), &base).unwrap();
        assert_eq!(c.adjusted_joules, Some(0.0));
        assert!(c.clamped);

        let other = IdleBaseline { backend: BackendTag::Powercap, ..base };
        assert!(matches!(adjust(&sample(1.0, 1.0), &other), Err(EnergyError::BackendMismatch { .. })));
    }

    #[test]
    fn nested_session_is_rejected() {
        let (m, _) = sim(1.0);
        let (inner, _) = m.measure("outer", || m.measure("inner", || ()).map(|_| ())).unwrap();
        assert!(matches!(inner, Err(EnergyError::SessionOverlap)));
        // the meter is usable again afterwards
        assert!(m.measure("again", || ()).is_ok());
    }
}
