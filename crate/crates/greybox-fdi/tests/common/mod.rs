//! Shared brute-force oracles and generators for the integration tests.
//! Everything here recomputes results from definitions, independently of the
//! library's algorithms: matching by exhaustive bitmask DP, decomposition by
//! leave-one-out surplus, MSO sets by full subset enumeration.

#![allow(dead_code)]

use std::collections::BTreeSet;

use greybox_fdi::model::{
    DiffLink, EqId, Equation, StructuralModel, SubModel, VarId, VarKind, Variable,
};
use greybox_fdi::rnn::GreyBoxRnn;
use greybox_fdi::train::{apply_params, collect_params, mse_loss, Batch};
use rand::Rng;

/// Equations-by-unknowns adjacency of a submodel, positions local.
pub struct Adjacency {
    pub eqs: Vec<EqId>,
    pub vars: Vec<VarId>,
    pub adj: Vec<Vec<usize>>,
}

pub fn adjacency(sub: &SubModel<'_>) -> Adjacency {
    let eqs: Vec<EqId> = sub.equations().to_vec();
    let vars: Vec<VarId> = sub.unknowns();
    let adj = eqs
        .iter()
        .map(|&e| {
            sub.unknowns_of(e)
                .into_iter()
                .map(|v| vars.binary_search(&v).unwrap())
                .collect()
        })
        .collect();
    Adjacency { eqs, vars, adj }
}

/// Maximum matching size by exhaustive DP over (equation index, used-variable
/// mask). Only for small graphs.
pub fn brute_matching_size(adj: &[Vec<usize>], n_vars: usize) -> usize {
    assert!(n_vars <= 16, "oracle is for small graphs");
    fn solve(i: usize, mask: usize, adj: &[Vec<usize>], n_vars: usize, memo: &mut [i16]) -> i16 {
        if i == adj.len() {
            return 0;
        }
        let key = (i << n_vars) | mask;
        if memo[key] >= 0 {
            return memo[key];
        }
        // skip this equation
        let mut best = solve(i + 1, mask, adj, n_vars, memo);
        for &v in &adj[i] {
            if mask & (1 << v) == 0 {
                best = best.max(1 + solve(i + 1, mask | (1 << v), adj, n_vars, memo));
            }
        }
        memo[key] = best;
        best
    }
    let mut memo = vec![-1i16; (adj.len() + 1) << n_vars];
    solve(0, 0, adj, n_vars, &mut memo) as usize
}

/// Coarse DM partition recomputed from definitions: an equation is in the
/// over-determined part iff some maximum matching avoids it; a variable is in
/// the under-determined part iff some maximum matching leaves it exposed.
pub struct OracleDm {
    pub over_eqs: BTreeSet<EqId>,
    pub over_vars: BTreeSet<VarId>,
    pub exact_eqs: BTreeSet<EqId>,
    pub exact_vars: BTreeSet<VarId>,
    pub under_eqs: BTreeSet<EqId>,
    pub under_vars: BTreeSet<VarId>,
    pub redundancy: usize,
}

pub fn oracle_dm(sub: &SubModel<'_>) -> OracleDm {
    let a = adjacency(sub);
    let n_vars = a.vars.len();
    let full = brute_matching_size(&a.adj, n_vars.max(1));

    let mut over_eq_pos = BTreeSet::new();
    for i in 0..a.adj.len() {
        let reduced: Vec<Vec<usize>> = a
            .adj
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, row)| row.clone())
            .collect();
        if brute_matching_size(&reduced, n_vars.max(1)) == full {
            over_eq_pos.insert(i);
        }
    }
    let mut under_var_pos = BTreeSet::new();
    for v in 0..n_vars {
        let reduced: Vec<Vec<usize>> = a
            .adj
            .iter()
            .map(|row| row.iter().copied().filter(|&x| x != v).collect())
            .collect();
        if brute_matching_size(&reduced, n_vars.max(1)) == full {
            under_var_pos.insert(v);
        }
    }
    let over_var_pos: BTreeSet<usize> = over_eq_pos
        .iter()
        .flat_map(|&i| a.adj[i].iter().copied())
        .collect();
    let under_eq_pos: BTreeSet<usize> = (0..a.adj.len())
        .filter(|&i| a.adj[i].iter().any(|v| under_var_pos.contains(v)))
        .collect();
    assert!(
        over_eq_pos.is_disjoint(&under_eq_pos),
        "oracle blocks overlap"
    );
    assert!(over_var_pos.is_disjoint(&under_var_pos));

    let over_eqs: BTreeSet<EqId> = over_eq_pos.iter().map(|&i| a.eqs[i]).collect();
    let over_vars: BTreeSet<VarId> = over_var_pos.iter().map(|&v| a.vars[v]).collect();
    let under_eqs: BTreeSet<EqId> = under_eq_pos.iter().map(|&i| a.eqs[i]).collect();
    let under_vars: BTreeSet<VarId> = under_var_pos.iter().map(|&v| a.vars[v]).collect();
    let exact_eqs = a
        .eqs
        .iter()
        .copied()
        .filter(|e| !over_eqs.contains(e) && !under_eqs.contains(e))
        .collect();
    let exact_vars = a
        .vars
        .iter()
        .copied()
        .filter(|v| !over_vars.contains(v) && !under_vars.contains(v))
        .collect();
    let redundancy = over_eqs.len() - over_vars.len();
    // surplus identity: |E+| - |X+| equals |E| - max matching
    assert_eq!(redundancy, a.eqs.len() - full);
    OracleDm {
        over_eqs,
        over_vars,
        exact_eqs,
        exact_vars,
        under_eqs,
        under_vars,
        redundancy,
    }
}

/// Surplus of an equation subset: |S| minus its brute-force matching size.
pub fn oracle_surplus(model: &StructuralModel, eqs: &BTreeSet<EqId>) -> i64 {
    let sub = model.submodel(eqs).unwrap();
    let a = adjacency(&sub);
    eqs.len() as i64 - brute_matching_size(&a.adj, a.vars.len().max(1)) as i64
}

/// All MSO sets by full subset enumeration: surplus one, and removing any
/// equation drops the surplus to zero (equivalently every proper removal
/// leaves nothing over-determined).
pub fn oracle_msos(model: &StructuralModel) -> BTreeSet<BTreeSet<EqId>> {
    let eqs: Vec<EqId> = model.equation_ids().collect();
    assert!(eqs.len() <= 16, "oracle is for small models");
    let mut out = BTreeSet::new();
    for mask in 1u32..(1 << eqs.len()) {
        let subset: BTreeSet<EqId> = eqs
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask & (1 << i) != 0)
            .map(|(_, &e)| e)
            .collect();
        if oracle_surplus(model, &subset) != 1 {
            continue;
        }
        let minimal = subset.iter().all(|&e| {
            let mut smaller = subset.clone();
            smaller.remove(&e);
            oracle_surplus(model, &smaller) == 0
        });
        if minimal {
            out.insert(subset);
        }
    }
    out
}

/// Random valid structural model: a few states with links, plain unknowns,
/// knowns, random incidence, optional faults and sensor equations.
pub fn random_model(rng: &mut impl Rng) -> StructuralModel {
    loop {
        if let Some(m) = try_random_model(rng) {
            return m;
        }
    }
}

fn try_random_model(rng: &mut impl Rng) -> Option<StructuralModel> {
    let n_links = rng.gen_range(0..=2);
    let n_plain = rng.gen_range(0..=4);
    let n_known = rng.gen_range(1..=3);
    let n_random_eqs = rng.gen_range(1..=(8 - n_links).min(6));

    let mut variables = Vec::new();
    let mut states = Vec::new();
    let mut derivs = Vec::new();
    for k in 0..n_links {
        states.push(VarId(variables.len()));
        variables.push(Variable {
            name: format!("s{k}"),
            kind: VarKind::State,
        });
        derivs.push(VarId(variables.len()));
        variables.push(Variable {
            name: format!("ds{k}"),
            kind: VarKind::Derivative,
        });
    }
    let mut plain = Vec::new();
    for k in 0..n_plain {
        plain.push(VarId(variables.len()));
        variables.push(Variable {
            name: format!("w{k}"),
            kind: VarKind::Unknown,
        });
    }
    let mut knowns = Vec::new();
    for k in 0..n_known {
        knowns.push(VarId(variables.len()));
        variables.push(Variable {
            name: format!("z{k}"),
            kind: VarKind::Known,
        });
    }

    let mut equations = Vec::new();
    let mut incidence: Vec<Vec<VarId>> = Vec::new();
    let mut links = Vec::new();
    for k in 0..n_links {
        let eq = EqId(equations.len());
        equations.push(Equation {
            name: format!("l{k}"),
        });
        incidence.push(vec![states[k], derivs[k]]);
        links.push(DiffLink {
            state: states[k],
            derivative: derivs[k],
            equation: eq,
        });
    }
    let pool: Vec<VarId> = states
        .iter()
        .chain(&derivs)
        .chain(&plain)
        .chain(&knowns)
        .copied()
        .collect();
    let mut non_link_eqs = Vec::new();
    for k in 0..n_random_eqs {
        let eq = EqId(equations.len());
        non_link_eqs.push(eq);
        equations.push(Equation {
            name: format!("e{k}"),
        });
        let mut row = BTreeSet::new();
        let size = rng.gen_range(1..=3.min(pool.len()));
        for _ in 0..size {
            row.insert(pool[rng.gen_range(0..pool.len())]);
        }
        incidence.push(row.into_iter().collect());
    }

    let mut faults = Vec::new();
    if !non_link_eqs.is_empty() && rng.gen_bool(0.5) {
        for k in 0..rng.gen_range(1..=2) {
            let fid = VarId(variables.len());
            variables.push(Variable {
                name: format!("f{k}"),
                kind: VarKind::Fault,
            });
            faults.push((fid, non_link_eqs[rng.gen_range(0..non_link_eqs.len())]));
        }
    }

    // sensor equations measure a fresh known each, reading one unknown
    let mut sensors = Vec::new();
    let unknown_pool: Vec<VarId> = states.iter().chain(&derivs).chain(&plain).copied().collect();
    if !unknown_pool.is_empty() && rng.gen_bool(0.5) {
        for k in 0..rng.gen_range(1..=2) {
            let sensor_var = VarId(variables.len());
            variables.push(Variable {
                name: format!("ms{k}"),
                kind: VarKind::Known,
            });
            let eq = EqId(equations.len());
            equations.push(Equation {
                name: format!("se{k}"),
            });
            incidence.push(vec![
                unknown_pool[rng.gen_range(0..unknown_pool.len())],
                sensor_var,
            ]);
            sensors.push((eq, sensor_var));
        }
    }

    StructuralModel::new(equations, variables, incidence, links, faults, sensors).ok()
}

/// Forward loss plus the sign pattern of every rectifier pre-activation, for
/// kink-aware finite differencing.
pub fn loss_and_pattern(rnn: &GreyBoxRnn, batch: &Batch) -> (f64, Vec<bool>) {
    let len = batch.measured.len();
    let mut x = rnn.initial_state.clone();
    let mut u = vec![0.0; batch.inputs.len()];
    let mut pattern = Vec::new();
    let mut predictions = Vec::with_capacity(len);
    for t in 0..len {
        for (k, col) in batch.inputs.iter().enumerate() {
            u[k] = col[t];
        }
        let mut next = Vec::with_capacity(x.len());
        for (i, net) in rnn.g_nets.iter().enumerate() {
            let v = GreyBoxRnn::gather(&rnn.structure.g_args[i], &x, &u);
            let (out, cache) = net.forward_cached(&v);
            for z in cache.pre.iter().take(cache.pre.len() - 1).flatten() {
                pattern.push(*z > 0.0);
            }
            next.push(x[i] + rnn.sampling_time * out);
        }
        let hv = GreyBoxRnn::gather(&rnn.structure.h_args, &x, &u);
        let (y_hat, cache) = rnn.h_net.forward_cached(&hv);
        for z in cache.pre.iter().take(cache.pre.len() - 1).flatten() {
            pattern.push(*z > 0.0);
        }
        predictions.push(y_hat);
        x = next;
    }
    (mse_loss(&predictions, &batch.measured).unwrap(), pattern)
}

/// Central-difference gradient check. Parameters whose perturbed passes flip
/// any rectifier are kink-adjacent and skipped. Returns (checked, failures).
pub fn finite_difference_failures(
    rnn: &GreyBoxRnn,
    batch: &Batch,
    analytic: &[f64],
    tol: f64,
) -> (usize, Vec<(usize, f64, f64)>) {
    let base = collect_params(rnn);
    let eps = 1e-6;
    let mut checked = 0;
    let mut bad = Vec::new();
    for (k, &g) in analytic.iter().enumerate() {
        let mut perturbed = rnn.clone();
        let mut p = base.clone();
        p[k] += eps;
        apply_params(&mut perturbed, &p);
        let (lp, pat_plus) = loss_and_pattern(&perturbed, batch);
        p[k] = base[k] - eps;
        apply_params(&mut perturbed, &p);
        let (lm, pat_minus) = loss_and_pattern(&perturbed, batch);
        if pat_plus != pat_minus {
            continue;
        }
        checked += 1;
        let fd = (lp - lm) / (2.0 * eps);
        if (g - fd).abs() >= 1e-9 + tol * g.abs().max(fd.abs()) {
            bad.push((k, g, fd));
        }
    }
    (checked, bad)
}

/// Standard normal sampler (Box-Muller).
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random state-space structure with up to `max_states` states and a couple
/// of inputs; argument lists are arbitrary subsets.
pub fn random_structure(
    rng: &mut impl Rng,
    max_states: usize,
) -> greybox_fdi::causal::StateSpaceStructure {
    use greybox_fdi::causal::{Arg, StateSpaceStructure};
    let n_states = rng.gen_range(1..=max_states);
    let n_inputs = rng.gen_range(0..=2);
    let states: Vec<String> = (0..n_states).map(|i| format!("x{i}")).collect();
    let inputs: Vec<String> = (0..n_inputs).map(|i| format!("u{i}")).collect();
    let mut pool = Vec::new();
    for i in 0..n_states {
        pool.push(Arg::State(i));
    }
    for i in 0..n_inputs {
        pool.push(Arg::Input(i));
    }
    let pick = |rng: &mut dyn rand::RngCore| -> Vec<Arg> {
        let mut args: Vec<Arg> = pool
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.6))
            .collect();
        args.sort_unstable();
        args.dedup();
        args
    };
    StateSpaceStructure {
        mso_id: 0,
        residual_eq: "e_r".into(),
        output_sensor: "y".into(),
        states,
        inputs,
        g_args: (0..n_states).map(|_| pick(rng)).collect(),
        h_args: pick(rng),
    }
}
