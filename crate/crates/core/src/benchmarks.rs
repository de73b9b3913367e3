//! Built-in limit states with reference solutions.
//!
//! Each benchmark maps a standard Gaussian point to a raw performance value
//! and a label. The driver only ever sees the label; [`BinaryOnly`] strips
//! the raw value entirely to prove it.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::classifier::{EventLabel, LabelNames};
use crate::error::{config, domain, Error, Result};
use crate::gaussian_geometry::SpaceDim;
use crate::input_transform::{MarginalSpec, NatafModel};
use crate::special::{norm_cdf, norm_sf};

/// One model evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub label: EventLabel,
    pub raw: Option<f64>,
}

/// Anything that can be evaluated at a standard Gaussian point.
pub trait LimitState {
    fn dim(&self) -> SpaceDim;
    fn evaluate(&mut self, x: &[f64]) -> Result<Outcome>;
    fn label_names(&self) -> LabelNames {
        LabelNames::default()
    }
}

impl<E: LimitState + ?Sized> LimitState for Box<E> {
    fn dim(&self) -> SpaceDim {
        (**self).dim()
    }
    fn evaluate(&mut self, x: &[f64]) -> Result<Outcome> {
        (**self).evaluate(x)
    }
    fn label_names(&self) -> LabelNames {
        (**self).label_names()
    }
}

/// Hides raw values from whatever sits downstream.
pub struct BinaryOnly<E>(pub E);

impl<E: LimitState> LimitState for BinaryOnly<E> {
    fn dim(&self) -> SpaceDim {
        self.0.dim()
    }
    fn evaluate(&mut self, x: &[f64]) -> Result<Outcome> {
        let out = self.0.evaluate(x)?;
        Ok(Outcome {
            label: out.label,
            raw: None,
        })
    }
    fn label_names(&self) -> LabelNames {
        self.0.label_names()
    }
}

pub const LINEAR_BETA: f64 = 4.753_424_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    WavyCircle,
    WavyLine,
    Metaballs,
    FourBranch,
    BlackSwan,
    Rastrigin,
    Alternating,
    Nataf,
    Linear,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 9] = [
        BenchmarkKind::WavyCircle,
        BenchmarkKind::WavyLine,
        BenchmarkKind::Metaballs,
        BenchmarkKind::FourBranch,
        BenchmarkKind::BlackSwan,
        BenchmarkKind::Rastrigin,
        BenchmarkKind::Alternating,
        BenchmarkKind::Nataf,
        BenchmarkKind::Linear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::WavyCircle => "wavy_circle",
            BenchmarkKind::WavyLine => "wavy_line",
            BenchmarkKind::Metaballs => "metaballs",
            BenchmarkKind::FourBranch => "four_branch",
            BenchmarkKind::BlackSwan => "black_swan",
            BenchmarkKind::Rastrigin => "rastrigin",
            BenchmarkKind::Alternating => "alternating",
            BenchmarkKind::Nataf => "nataf",
            BenchmarkKind::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                let known: Vec<&str> = BenchmarkKind::ALL.iter().map(|k| k.name()).collect();
                config(format!(
                    "unknown benchmark {name:?}; available: {}",
                    known.join(", ")
                ))
            })
    }
}

/// Reference solution of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub p_f: f64,
    pub design_points: Vec<Vec<f64>>,
    pub s_squared: Option<Vec<f64>>,
    pub notes: String,
}

/// A benchmark instance: formula, dimension and reference.
#[derive(Debug, Clone)]
pub struct Benchmark {
    kind: BenchmarkKind,
    dim: SpaceDim,
    nataf: Option<NatafModel>,
}

/// Marginals and Gaussian correlation of the Nataf benchmark.
pub fn nataf_benchmark_model() -> NatafModel {
    NatafModel::new(
        vec![
            MarginalSpec::GumbelMax {
                location: 0.0,
                scale: 1.0,
            },
            MarginalSpec::WeibullMin {
                shape: 1.5,
                scale: 1.0,
            },
        ],
        &[vec![1.0, -0.8], vec![-0.8, 1.0]],
    )
    .expect("fixed model is valid")
}

impl Benchmark {
    /// Instantiate by name. Only `linear` accepts a dimension other than 2.
    pub fn new(name: &str, dim: Option<usize>) -> Result<Self> {
        let kind = BenchmarkKind::from_name(name)?;
        let n = match (kind, dim) {
            (BenchmarkKind::Linear, Some(n)) => n,
            (BenchmarkKind::Linear, None) => 2,
            (_, None) | (_, Some(2)) => 2,
            (_, Some(n)) => {
                return Err(config(format!(
                    "benchmark {name} is two-dimensional, got dim {n}"
                )))
            }
        };
        let nataf = (kind == BenchmarkKind::Nataf).then(nataf_benchmark_model);
        Ok(Benchmark {
            kind,
            dim: SpaceDim::new(n)?,
            nataf,
        })
    }

    pub fn kind(&self) -> BenchmarkKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn space_dim(&self) -> SpaceDim {
        self.dim
    }

    /// Raw performance value.
    pub fn g(&self, x: &[f64]) -> f64 {
        let (x1, x2) = (x[0], x.get(1).copied().unwrap_or(0.0));
        match self.kind {
            BenchmarkKind::WavyCircle => wavy_circle_g(x1, x2),
            BenchmarkKind::WavyLine => -0.25 * x1 - x2 + (5.0 * x1).sin() + 5.5,
            BenchmarkKind::Metaballs => {
                let a = 4.0 * (x1 + 2.0).powi(2) / 9.0 + x2 * x2 / 25.0;
                let b = (x1 - 2.5).powi(2) / 4.0 + (x2 - 0.5).powi(2) / 25.0;
                30.0 / (a * a + 1.0) + 20.0 / (b * b + 1.0) - 5.0
            }
            BenchmarkKind::FourBranch => {
                let q = 3.0 + 0.1 * (x1 - x2).powi(2);
                let s = (x1 + x2) / SQRT_2;
                let c = 7.0 / SQRT_2;
                (q - s).min(q + s).min(x1 - x2 + c).min(x2 - x1 + c)
            }
            BenchmarkKind::BlackSwan => {
                if x1 <= 2.0 {
                    5.0 - x1
                } else {
                    5.0 - x2
                }
            }
            BenchmarkKind::Rastrigin => {
                10.0 - [x1, x2]
                    .iter()
                    .map(|v| v * v - 5.0 * (2.0 * PI * v).cos())
                    .sum::<f64>()
            }
            BenchmarkKind::Alternating => (x1 * (-x1 - 4.0).exp()).cos(),
            BenchmarkKind::Nataf => {
                let z = self.nataf.as_ref().expect("nataf model").to_physical(x);
                7.0 - z[0] - 2.0 * z[1]
            }
            BenchmarkKind::Linear => LINEAR_BETA - x1,
        }
    }

    /// Failure is `g <= 0`, except the black swan where it is `g < 0`.
    pub fn is_failure(&self, g: f64) -> bool {
        match self.kind {
            BenchmarkKind::BlackSwan => g < 0.0,
            _ => g <= 0.0,
        }
    }

    pub fn label(&self, x: &[f64]) -> EventLabel {
        if self.is_failure(self.g(x)) {
            EventLabel::FAILURE
        } else {
            EventLabel::SAFE
        }
    }

    pub fn reference(&self) -> Reference {
        reference_solution(self.kind)
    }
}

/// `4 + sin(7 phi) - |x|`, with `atan2(0, 0)` taken as 0.
pub fn wavy_circle_g(x1: f64, x2: f64) -> f64 {
    let phi = if x1 == 0.0 && x2 == 0.0 {
        0.0
    } else {
        x2.atan2(x1)
    };
    4.0 + (7.0 * phi).sin() - x1.hypot(x2)
}

/// Quartic sensitivity fixture `3 - x1^4 / 33 - x2`, not a driver benchmark.
pub fn quartic_g(x: &[f64]) -> f64 {
    3.0 - x[0].powi(4) / 33.0 - x[1]
}

impl LimitState for Benchmark {
    fn dim(&self) -> SpaceDim {
        self.dim
    }
    fn evaluate(&mut self, x: &[f64]) -> Result<Outcome> {
        if x.len() != self.dim.get() {
            return Err(Error::Evaluator(format!(
                "{} expects {} coordinates, got {}",
                self.name(),
                self.dim.get(),
                x.len()
            )));
        }
        let g = self.g(x);
        let label = if self.is_failure(g) {
            EventLabel::FAILURE
        } else {
            EventLabel::SAFE
        };
        Ok(Outcome {
            label,
            raw: Some(g),
        })
    }
}

pub fn reference_solution(kind: BenchmarkKind) -> Reference {
    let r = |p_f: f64, dp: Vec<Vec<f64>>, s: Option<Vec<f64>>, notes: &str| Reference {
        p_f,
        design_points: dp,
        s_squared: s,
        notes: notes.to_string(),
    };
    let h = 3.0 * FRAC_1_SQRT_2;
    match kind {
        BenchmarkKind::WavyCircle => r(
            2.582e-3,
            (0..7)
                .map(|k| {
                    let phi = (-0.5 * PI + 2.0 * PI * k as f64) / 7.0;
                    vec![3.0 * phi.cos(), 3.0 * phi.sin()]
                })
                .collect(),
            Some(vec![0.5, 0.5]),
            "seven design points at distance 3",
        ),
        BenchmarkKind::WavyLine => r(
            1.217e-6,
            vec![vec![0.943_626, 4.264_11]],
            Some(vec![0.829, 0.171]),
            "beta = 4.3672719",
        ),
        BenchmarkKind::Metaballs => r(1.128_57e-5, vec![], None, "two overlapping blobs"),
        BenchmarkKind::FourBranch => r(
            2.222e-3,
            vec![vec![h, h], vec![-h, -h]],
            None,
            "series system; constant 7/sqrt(2)",
        ),
        BenchmarkKind::BlackSwan => r(
            norm_sf(5.0) * norm_sf(2.0),
            vec![vec![2.0, 5.0]],
            Some(vec![0.3189, 0.6811]),
            "failure iff x1 > 2 and x2 > 5",
        ),
        BenchmarkKind::Rastrigin => r(
            0.072_986,
            vec![],
            Some(vec![0.5, 0.5]),
            "scattered closed failure regions",
        ),
        BenchmarkKind::Alternating => r(
            5.266e-4,
            vec![vec![ALTERNATING_B0, 0.0]],
            None,
            "parallel boundaries at the roots b_k",
        ),
        BenchmarkKind::Nataf => r(
            1.143e-3,
            vec![],
            None,
            "Gumbel(0,1) and Weibull(1.5,1) joined with Gaussian correlation -0.8",
        ),
        BenchmarkKind::Linear => r(
            norm_sf(LINEAR_BETA),
            vec![vec![LINEAR_BETA]],
            Some(vec![1.0]),
            "g = beta - x1 in any dimension",
        ),
    }
}

const ALTERNATING_B0: f64 = -3.267_544;

/// Boundary `b_k` of the alternating benchmark: the root of
/// `(2k+1) pi = -2 b exp(-b - 4)` with `b < -1`.
pub fn alternating_boundary(k: usize) -> f64 {
    let target = (2 * k + 1) as f64 * PI;
    let f = |b: f64| -2.0 * b * (-b - 4.0).exp() - target;
    // f increases as b decreases below -1.
    let (mut lo, mut hi) = (-60.0, -1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `sum (-1)^k Phi(b_k)`, summed until terms drop below `1e-18`.
pub fn alternating_series() -> f64 {
    let mut total = 0.0;
    for k in 0.. {
        let term = norm_cdf(alternating_boundary(k));
        total += if k % 2 == 0 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    total
}

/// Settings of the polar quadrature oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleSettings {
    pub n_theta: usize,
    pub radial_step: f64,
    pub max_radius: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            n_theta: 4000,
            radial_step: 2e-3,
            max_radius: 12.0,
        }
    }
}

/// Independent reference: closed forms where they exist, otherwise a polar
/// quadrature in two dimensions.
///
/// Along each of `n_theta` rays the failure indicator is scanned at
/// `radial_step`, every sign change is refined by bisection, and each
/// failure interval `[a, b]` contributes `exp(-a^2/2) - exp(-b^2/2)`.
pub fn oracle_pf(bench: &Benchmark, settings: OracleSettings) -> Result<f64> {
    match bench.kind {
        BenchmarkKind::Linear => return Ok(norm_sf(LINEAR_BETA)),
        BenchmarkKind::BlackSwan => return Ok(norm_sf(5.0) * norm_sf(2.0)),
        _ => {}
    }
    if bench.dim.get() != 2 {
        return Err(domain("quadrature oracle supports two dimensions only"));
    }
    let fails = |t: f64, c: f64, s: f64| bench.is_failure(bench.g(&[t * c, t * s]));
    let steps = (settings.max_radius / settings.radial_step).ceil() as usize;
    let mut total = 0.0;
    for i in 0..settings.n_theta {
        let theta = 2.0 * PI * (i as f64 + 0.5) / settings.n_theta as f64;
        let (s, c) = theta.sin_cos();
        let mut inside = fails(0.0, c, s);
        let mut start = 0.0f64;
        let mut ray = 0.0f64;
        for k in 1..=steps {
            let t = k as f64 * settings.radial_step;
            let now = fails(t, c, s);
            if now != inside {
                let (mut a, mut b) = (t - settings.radial_step, t);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if fails(m, c, s) == inside {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let edge = 0.5 * (a + b);
                if inside {
                    ray += (-0.5 * start * start).exp() - (-0.5 * edge * edge).exp();
                } else {
                    start = edge;
                }
                inside = now;
            }
        }
        if inside {
            ray += (-0.5 * start * start).exp();
        }
        total += ray;
    }
    Ok(total / settings.n_theta as f64)
}

/// User model run as a child process.
///
/// For every evaluation one line of whitespace-separated coordinates is
/// written to the child's stdin and one label token is read back from its
/// stdout. Tokens are label names (`safe`, `failure`, `no_result`, or any
/// new name, which gets the next free code) or numeric codes. A child that
/// dies is restarted on the next call.
pub struct ExternalEvaluator {
    command: Vec<String>,
    dim: SpaceDim,
    names: LabelNames,
    child: Option<ExternalChild>,
}

struct ExternalChild {
    process: std::process::Child,
    stdin: std::process::ChildStdin,
    stdout: std::io::BufReader<std::process::ChildStdout>,
}

impl ExternalEvaluator {
    pub fn new(command: Vec<String>, dim: SpaceDim) -> Result<Self> {
        if command.is_empty() {
            return Err(config("external command is empty"));
        }
        let mut ev = ExternalEvaluator {
            command,
            dim,
            names: LabelNames::default(),
            child: None,
        };
        ev.spawn()?;
        Ok(ev)
    }

    fn spawn(&mut self) -> Result<()> {
        use std::process::{Command, Stdio};
        let mut process = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Evaluator(format!("cannot start {:?}: {e}", self.command[0])))?;
        let stdin = process.stdin.take().expect("piped stdin");
        let stdout = std::io::BufReader::new(process.stdout.take().expect("piped stdout"));
        self.child = Some(ExternalChild {
            process,
            stdin,
            stdout,
        });
        Ok(())
    }

    fn exchange(&mut self, line: &str) -> Result<String> {
        use std::io::{BufRead, Write};
        if self.child.is_none() {
            self.spawn()?;
        }
        let child = self.child.as_mut().expect("spawned");
        let fail = |e: std::io::Error| Error::Evaluator(format!("evaluator pipe failed: {e}"));
        child.stdin.write_all(line.as_bytes()).map_err(fail)?;
        child.stdin.flush().map_err(fail)?;
        let mut reply = String::new();
        let n = child.stdout.read_line(&mut reply).map_err(fail)?;
        if n == 0 {
            return Err(Error::Evaluator("evaluator closed its output".into()));
        }
        Ok(reply.trim().to_string())
    }

    fn parse_token(&mut self, token: &str) -> Result<EventLabel> {
        if token.is_empty() || token.contains(char::is_whitespace) {
            return Err(Error::Evaluator(format!("bad label token {token:?}")));
        }
        if let Some(l) = self.names.parse(token) {
            return Ok(l);
        }
        let next = EventLabel(self.names.codes().max().map_or(0, |c| c + 1));
        self.names.register(next, token)?;
        Ok(next)
    }
}

impl LimitState for ExternalEvaluator {
    fn dim(&self) -> SpaceDim {
        self.dim
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<Outcome> {
        let mut line = x
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(" ");
        line.push('\n');
        match self.exchange(&line).and_then(|t| self.parse_token(&t)) {
            Ok(label) => Ok(Outcome { label, raw: None }),
            Err(e) => {
                if let Some(mut c) = self.child.take() {
                    let _ = c.process.kill();
                    let _ = c.process.wait();
                }
                Err(e)
            }
        }
    }

    fn label_names(&self) -> LabelNames {
        self.names.clone()
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        if let Some(c) = self.child.take() {
            drop(c.stdin);
            let mut p = c.process;
            let _ = p.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bench(name: &str) -> Benchmark {
        Benchmark::new(name, None).unwrap()
    }

    #[test]
    fn registry() {
        assert!(Benchmark::new("nope", None)
            .unwrap_err()
            .to_string()
            .contains("wavy_circle"));
        assert!(Benchmark::new("wavy_circle", Some(3)).is_err());
        assert_eq!(
            Benchmark::new("linear", Some(7)).unwrap().space_dim().get(),
            7
        );
    }

    #[test]
    fn formula_spot_values() {
        let wc = bench("wavy_circle");
        assert_eq!(wc.g(&[0.0, 0.0]), 4.0);
        assert_eq!(wc.label(&[0.0, 0.0]), EventLabel::SAFE);
        let fb = bench("four_branch");
        assert!(fb.g(&[3.0 * FRAC_1_SQRT_2, 3.0 * FRAC_1_SQRT_2]).abs() < 1e-12);
        let bs = bench("black_swan");
        assert_eq!(bs.label(&[2.5, 5.5]), EventLabel::FAILURE);
        assert_eq!(bs.label(&[2.5, 5.0]), EventLabel::SAFE);
        assert_eq!(bs.label(&[0.0, 0.0]), EventLabel::SAFE);
        let lin = Benchmark::new("linear", Some(5)).unwrap();
        assert_eq!(lin.g(&[LINEAR_BETA, 0.0, 0.0, 0.0, 0.0]), 0.0);
        assert_eq!(
            lin.label(&[LINEAR_BETA, 0.0, 0.0, 0.0, 0.0]),
            EventLabel::FAILURE
        );
        let wl = bench("wavy_line");
        assert!(wl.g(&[0.943_626, 4.264_11]).abs() < 1e-4);
    }

    #[test]
    fn symmetries() {
        let ra = bench("rastrigin");
        let fb = bench("four_branch");
        for &(a, b) in &[(0.3, 1.7), (-2.2, 0.4), (1.1, -3.0)] {
            let g = ra.g(&[a, b]);
            for p in [[a, -b], [-a, b], [-a, -b], [b, a]] {
                assert!((ra.g(&p) - g).abs() < 1e-12);
            }
            let g = fb.g(&[a, b]);
            assert!((fb.g(&[b, a]) - g).abs() < 1e-12);
            assert!((fb.g(&[-a, -b]) - g).abs() < 1e-12);
        }
    }

    #[test]
    fn alternating_boundaries_and_series() {
        let listed = [-3.267_544, -4.131_54, -4.5466, -4.8239];
        for (k, &b) in listed.iter().enumerate() {
            assert!((alternating_boundary(k) - b).abs() < 1e-4, "k={k}");
        }
        assert!((alternating_series() - 5.266e-4).abs() < 1e-6);
        let alt = bench("alternating");
        assert_eq!(alt.label(&[-3.5, 0.0]), EventLabel::FAILURE);
        assert_eq!(alt.label(&[-4.3, 0.0]), EventLabel::SAFE);
    }

    #[test]
    fn binary_only_hides_raw() {
        let mut b = BinaryOnly(bench("wavy_circle"));
        let out = b.evaluate(&[5.0, 0.0]).unwrap();
        assert_eq!(out.raw, None);
        assert_eq!(out.label, EventLabel::FAILURE);
    }

    #[test]
    fn closed_form_oracles() {
        let lin = Benchmark::new("linear", Some(10)).unwrap();
        assert!((oracle_pf(&lin, OracleSettings::default()).unwrap() / 1e-6 - 1.0).abs() < 1e-6);
        let bs = bench("black_swan");
        let p = oracle_pf(&bs, OracleSettings::default()).unwrap();
        assert!((p / 6.521_36e-9 - 1.0).abs() < 1e-5);
    }
}
