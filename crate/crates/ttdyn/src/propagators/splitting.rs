//! Odd/even splitting (LT, SM) and its symmetric compositions (YN, KL).

use std::collections::HashMap;

use ndarray::{Array2, Array3, Array4, Axis};
use num_complex::Complex64 as C64;

use super::{check_finite, Integrator, PropagatorConfig, Scheme};
use crate::error::{Error, Result};
use crate::linalg::Spectral;
use crate::slim::{kron, SlimComponents};
use crate::tt::{Direction, TensorTrain, TruncationPolicy};

/// Group of mutually commuting generators. `Odd` holds the generators
/// starting at 0-based sites 0, 2, 4, ..
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn of_site(i: usize) -> Parity {
        if i % 2 == 0 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    pub fn other(self) -> Parity {
        match self {
            Parity::Odd => Parity::Even,
            Parity::Even => Parity::Odd,
        }
    }
}

/// `h_i = S_i ⊗ I + Σ_λ L_{i,λ} ⊗ M_{i+1,λ}` on sites `(i, i+1)`, or `S_i`
/// alone on the last site.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGenerator {
    pub site: usize,
    pub matrix: Array2<f64>,
    pub parity: Parity,
}

impl PairGenerator {
    pub fn is_pair(&self, n_sites: usize) -> bool {
        self.site + 1 < n_sites
    }
}

pub fn build_pair_generators(slim: &SlimComponents) -> Result<Vec<PairGenerator>> {
    let n = slim.n_sites();
    if n == 0 {
        return Err(Error::DimensionMismatch("no sites".into()));
    }
    if slim.l.len() + 1 != n || slim.m.len() + 1 != n {
        return Err(Error::DimensionMismatch("bond count must be n_sites - 1".into()));
    }
    Ok((0..n)
        .map(|i| {
            let matrix = if i + 1 < n {
                let eye = Array2::<f64>::eye(slim.s[i + 1].nrows());
                let mut h = kron(&slim.s[i], &eye);
                for (l, m) in slim.l[i].iter().zip(&slim.m[i]) {
                    h += &kron(l, m);
                }
                h
            } else {
                slim.s[i].clone()
            };
            PairGenerator { site: i, matrix, parity: Parity::of_site(i) }
        })
        .collect())
}

/// `exp(-i tau h)` by Hermitian eigendecomposition.
pub fn two_site_gate(generator: &PairGenerator, tau: f64) -> Result<Array2<C64>> {
    let h = &generator.matrix;
    let asym = h.iter().zip(h.t().iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = h.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1.0);
    assert!(asym <= 1e-12 * scale, "generator at site {} is not symmetric", generator.site);
    Ok(Spectral::of_real(h.view())?.propagator(tau))
}

/// Gates per generator and step size. Generators with identical matrices
/// share one eigendecomposition, so homogeneous chains need few.
#[derive(Clone, Debug)]
pub struct GateCache {
    n_sites: usize,
    /// Index into `spectra` per site.
    class: Vec<usize>,
    spectra: Vec<Spectral>,
    gates: HashMap<(usize, u64), Array2<C64>>,
}

impl GateCache {
    pub fn new(generators: &[PairGenerator]) -> Result<Self> {
        let mut reps: Vec<&Array2<f64>> = Vec::new();
        let mut spectra = Vec::new();
        let mut class = Vec::with_capacity(generators.len());
        for g in generators {
            match reps.iter().position(|r| *r == &g.matrix) {
                Some(k) => class.push(k),
                None => {
                    two_site_gate(g, 0.0)?;
                    spectra.push(Spectral::of_real(g.matrix.view())?);
                    reps.push(&g.matrix);
                    class.push(reps.len() - 1);
                }
            }
        }
        Ok(GateCache { n_sites: generators.len(), class, spectra, gates: HashMap::new() })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Number of distinct generators.
    pub fn distinct(&self) -> usize {
        self.spectra.len()
    }

    pub fn gate(&mut self, site: usize, tau: f64) -> &Array2<C64> {
        let k = self.class[site];
        let spectra = &self.spectra;
        self.gates.entry((k, tau.to_bits())).or_insert_with(|| spectra[k].propagator(tau))
    }
}

fn apply_to_block(gate: &Array2<C64>, block: &Array4<C64>) -> Array4<C64> {
    let (rl, d1, d2, rr) = block.dim();
    let dd = d1 * d2;
    // One product over all bond indices: (dd, dd) x (dd, rl * rr).
    let b3 = block.view().into_shape_with_order((rl, dd, rr)).expect("standard layout");
    let x = b3.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
    let x = x.into_shape_with_order((dd, rl * rr)).expect("reshape");
    let y = gate.dot(&x).into_shape_with_order((dd, rl, rr)).expect("reshape");
    let y = y.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
    y.into_shape_with_order((rl, d1, d2, rr)).expect("reshape")
}

fn apply_to_core(gate: &Array2<C64>, core: &Array3<C64>) -> Array3<C64> {
    let (rl, d, rr) = core.dim();
    let mut out = Array3::<C64>::zeros((rl, d, rr));
    for a in 0..rl {
        out.index_axis_mut(Axis(0), a).assign(&gate.dot(&core.index_axis(Axis(0), a)));
    }
    out
}

/// Applies `exp(-i tau H_parity)` gate by gate, splitting each pair under
/// `policy`. The sweep runs from whichever end the center is closer to, so
/// alternating layers need no extra canonicalization; the center ends at the
/// opposite end.
pub fn apply_gate_layer(
    psi: &TensorTrain,
    cache: &mut GateCache,
    parity: Parity,
    tau: f64,
    policy: &TruncationPolicy,
) -> Result<TensorTrain> {
    let mut out = psi.clone();
    apply_gate_layer_in_place(&mut out, cache, parity, tau, policy)?;
    Ok(out)
}

fn apply_gate_layer_in_place(
    psi: &mut TensorTrain,
    cache: &mut GateCache,
    parity: Parity,
    tau: f64,
    policy: &TruncationPolicy,
) -> Result<()> {
    let n = psi.n_sites();
    if cache.n_sites() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} gates for {n} sites",
            cache.n_sites()
        )));
    }
    let first = if parity == Parity::Odd { 0 } else { 1 };
    let pairs: Vec<usize> = (first..n.saturating_sub(1)).step_by(2).collect();
    // The last site carries a lone single-site gate when it belongs here.
    if Parity::of_site(n - 1) == parity {
        let g = cache.gate(n - 1, tau).clone();
        let core = apply_to_core(&g, psi.core(n - 1));
        psi.set_core_physical_unitary(n - 1, core);
    }
    if pairs.is_empty() {
        return Ok(());
    }
    let center = psi.ortho_center();
    let left_to_right = match center {
        Some(c) => c < n - 1 - c,
        None => true,
    };
    if left_to_right {
        if center != Some(pairs[0]) {
            psi.canonicalize_in_place(pairs[0]);
        }
        for &i in &pairs {
            psi.canonicalize_in_place(i);
            let block = apply_to_block(cache.gate(i, tau), &psi.merge_pair_unchecked(i));
            psi.set_pair(i, &block, policy, Direction::Right)?;
        }
    } else {
        let last = *pairs.last().expect("nonempty");
        if center != Some(last + 1) {
            psi.canonicalize_in_place(last + 1);
        }
        for &i in pairs.iter().rev() {
            psi.canonicalize_in_place(i + 1);
            let block = apply_to_block(cache.gate(i, tau), &psi.merge_pair_unchecked(i));
            psi.set_pair(i, &block, policy, Direction::Left)?;
        }
    }
    Ok(())
}

/// Stage weights `γ_j` of a symmetric composition of SM steps.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionCoefficients {
    pub gammas: Vec<f64>,
}

impl CompositionCoefficients {
    pub fn single() -> Self {
        CompositionCoefficients { gammas: vec![1.0] }
    }

    pub fn sum(&self) -> f64 {
        self.gammas.iter().sum()
    }

    pub fn is_palindromic(&self) -> bool {
        let g = &self.gammas;
        (0..g.len()).all(|j| g[j] == g[g.len() - 1 - j])
    }
}

/// Fourth-order triple jump.
pub fn yoshida_neri() -> CompositionCoefficients {
    let g1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
    CompositionCoefficients { gammas: vec![g1, 1.0 - 2.0 * g1, g1] }
}

/// Kahan and Li's 17-stage eighth-order composition.
pub fn kahan_li() -> CompositionCoefficients {
    const HALF: [f64; 8] = [
        0.130_202_483_088_890_080_878_817_63,
        0.561_162_981_775_108_384_561_964_41,
        -0.389_474_962_644_847_286_408_078_60,
        0.158_841_906_555_155_600_896_210_75,
        -0.395_903_894_133_237_577_336_231_54,
        0.184_539_640_978_315_707_091_832_54,
        0.258_374_387_686_322_047_293_979_11,
        0.295_011_723_609_310_298_870_966_24,
    ];
    const MIDDLE: f64 = -0.605_508_533_830_034_511_698_921_08;
    let mut gammas = HALF.to_vec();
    gammas.push(MIDDLE);
    gammas.extend(HALF.iter().rev());
    CompositionCoefficients { gammas }
}

/// One gate layer in a flattened schedule; `boundary` marks layers that
/// close a sub-step.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Layer {
    parity: Parity,
    tau: f64,
    boundary: bool,
}

fn step_layers(scheme: Scheme, dt: f64) -> Result<Vec<(Parity, f64)>> {
    let sm = |g: f64| {
        vec![(Parity::Odd, 0.5 * g * dt), (Parity::Even, g * dt), (Parity::Odd, 0.5 * g * dt)]
    };
    Ok(match scheme {
        Scheme::Lt => vec![(Parity::Odd, dt), (Parity::Even, dt)],
        Scheme::Sm => sm(1.0),
        Scheme::Yn => yoshida_neri().gammas.iter().flat_map(|&g| sm(g)).collect(),
        Scheme::Kl => kahan_li().gammas.iter().flat_map(|&g| sm(g)).collect(),
        other => return Err(Error::Unsupported(format!("`{other}` is not a splitting scheme"))),
    })
}

/// Schedule of `n` sub-steps with adjacent same-parity layers fused.
fn schedule(scheme: Scheme, dt: f64, n: usize) -> Result<Vec<Layer>> {
    let one = step_layers(scheme, dt)?;
    let mut out: Vec<Layer> = Vec::new();
    for _ in 0..n {
        for (k, &(parity, tau)) in one.iter().enumerate() {
            let closes = k + 1 == one.len();
            match out.last_mut() {
                Some(prev) if prev.parity == parity => {
                    prev.tau += tau;
                    prev.boundary |= closes;
                }
                _ => out.push(Layer { parity, tau, boundary: closes }),
            }
        }
    }
    Ok(out)
}

/// One splitting step of `scheme`, rounded to `policy` at the end.
pub fn step_splitting(
    psi: &TensorTrain,
    cache: &mut GateCache,
    scheme: Scheme,
    dt: f64,
    stage: &TruncationPolicy,
    policy: &TruncationPolicy,
) -> Result<TensorTrain> {
    run_schedule(psi, cache, &schedule(scheme, dt, 1)?, stage, policy)
}

fn run_schedule(
    psi: &TensorTrain,
    cache: &mut GateCache,
    layers: &[Layer],
    stage: &TruncationPolicy,
    policy: &TruncationPolicy,
) -> Result<TensorTrain> {
    let mut out = psi.clone();
    for layer in layers {
        let p = if layer.boundary { policy } else { stage };
        apply_gate_layer_in_place(&mut out, cache, layer.parity, layer.tau, p)?;
    }
    out.round_in_place(policy)?;
    Ok(out)
}

/// Splitting integrator with cached gates.
#[derive(Clone, Debug)]
pub struct Splitting {
    config: PropagatorConfig,
    cache: GateCache,
    steps: usize,
}

impl Splitting {
    pub fn new(config: PropagatorConfig, slim: &SlimComponents) -> Result<Self> {
        if !config.scheme.is_splitting() {
            return Err(Error::Unsupported(format!("`{}` is not a splitting scheme", config.scheme)));
        }
        let cache = GateCache::new(&build_pair_generators(slim)?)?;
        Ok(Splitting { config, cache, steps: 0 })
    }
}

impl Integrator for Splitting {
    fn scheme(&self) -> Scheme {
        self.config.scheme
    }

    fn advance(&mut self, psi: &TensorTrain, n: usize) -> Result<TensorTrain> {
        if n == 0 {
            return Ok(psi.clone());
        }
        let layers = schedule(self.config.scheme, self.config.dt, n)?;
        let out = run_schedule(
            psi,
            &mut self.cache,
            &layers,
            &self.config.stage_policy(),
            &self.config.policy(),
        )?;
        self.steps += n;
        check_finite(&out, self.steps as f64 * self.config.dt)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_schedule_preserves_total_time_per_parity() {
        for scheme in [Scheme::Lt, Scheme::Sm, Scheme::Yn, Scheme::Kl] {
            let layers = schedule(scheme, 0.3, 4).unwrap();
            for parity in [Parity::Odd, Parity::Even] {
                let t: f64 = layers.iter().filter(|l| l.parity == parity).map(|l| l.tau).sum();
                assert!((t - 1.2).abs() < 1e-12, "{scheme} {parity:?} {t}");
            }
            assert!(layers.windows(2).all(|w| w[0].parity == w[1].parity.other()));
            assert_eq!(layers.iter().filter(|l| l.boundary).count(), 4);
        }
    }

    #[test]
    fn sm_fuses_half_steps() {
        let layers = schedule(Scheme::Sm, 1.0, 3).unwrap();
        let taus: Vec<f64> = layers.iter().map(|l| l.tau).collect();
        assert_eq!(taus, vec![0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5]);
    }
}
