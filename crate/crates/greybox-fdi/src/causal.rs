//! From an MSO set and a residual equation choice to a computational graph:
//! matching of the exactly determined remainder, causality classification,
//! and extraction of the state-space structure (argument lists of the state
//! updates and of the output map).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::dm::Matching;
use crate::model::{DiffLink, EqId, StructuralModel, VarId, VarKind};
use crate::mso::MsoSet;

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("residual equation `{0}` is not in the MSO set")]
    ResidualNotInSet(String),
    #[error("differential-link equation `{0}` cannot be a residual equation")]
    ResidualIsLink(String),
    #[error("no perfect matching of the remainder exists")]
    NoPerfectMatching,
    #[error("algebraic loop through equations {0:?}")]
    AlgebraicLoop(Vec<String>),
    #[error("graph does not have integral causality")]
    NotIntegral,
    #[error("residual equation `{0}` is not a sensor equation")]
    ResidualNotSensor(String),
    #[error("state `{0}` feeds no state update or output chain")]
    DeadState(String),
}

/// Causality of a computational graph, determined by which side of each
/// differential link the matching solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Causality {
    /// All states obtained by integrating their derivatives.
    Integral,
    /// All states differentiated to obtain their derivatives.
    Derivative,
    /// Both integrations and differentiations present.
    Mixed,
    /// No differential links involved.
    Algebraic,
}

impl Causality {
    pub fn label(self) -> &'static str {
        match self {
            Causality::Integral => "integral",
            Causality::Derivative => "derivative",
            Causality::Mixed => "mixed",
            Causality::Algebraic => "algebraic",
        }
    }
}

/// Directed evaluation order derived from a matching: each non-residual
/// equation produces its matched variable from the remaining incident
/// variables; the residual equation compares the measured signal against the
/// reconstruction.
#[derive(Debug, Clone)]
pub struct CompGraph {
    pub mso_id: usize,
    pub equations: Vec<EqId>,
    pub residual_eq: EqId,
    pub matching: Matching,
    /// Link equations matched to their state (state from derivative).
    pub integration_nodes: BTreeSet<EqId>,
    /// Link equations matched to their derivative (derivative from state).
    pub differentiation_nodes: BTreeSet<EqId>,
}

impl CompGraph {
    pub fn causality(&self) -> Causality {
        match (
            self.integration_nodes.is_empty(),
            self.differentiation_nodes.is_empty(),
        ) {
            (false, true) => Causality::Integral,
            (true, false) => Causality::Derivative,
            (false, false) => Causality::Mixed,
            (true, true) => Causality::Algebraic,
        }
    }

    /// Producing equation of each unknown in the graph.
    pub fn producer_of(&self, var: VarId) -> Option<EqId> {
        self.matching.equation_of(var)
    }

    /// DOT rendering for inspection; variables are ellipses, equations boxes,
    /// link equations annotated with their role.
    pub fn to_dot(&self, model: &StructuralModel) -> String {
        let mut out = String::from("digraph comp_graph {\n  rankdir=LR;\n");
        for &e in &self.equations {
            let name = &model.equation(e).name;
            let deco = if self.integration_nodes.contains(&e) {
                " [shape=box,label=\"{n}\\n(integrate)\"]"
            } else if self.differentiation_nodes.contains(&e) {
                " [shape=box,label=\"{n}\\n(differentiate)\"]"
            } else if e == self.residual_eq {
                " [shape=box,label=\"{n}\\n(residual)\"]"
            } else {
                " [shape=box]"
            };
            let _ = writeln!(out, "  \"{}\"{}", name, deco.replace("{n}", name));
        }
        for &e in &self.equations {
            let eq_name = &model.equation(e).name;
            let produced = self.matching.variable_of(e);
            for &v in model.incident(e) {
                if model.variable(v).kind == VarKind::Fault {
                    continue;
                }
                let var_name = &model.variable(v).name;
                if produced == Some(v) {
                    let _ = writeln!(out, "  \"{eq_name}\" -> \"{var_name}\"");
                } else {
                    let _ = writeln!(out, "  \"{var_name}\" -> \"{eq_name}\"");
                }
            }
        }
        let _ = writeln!(
            out,
            "  \"{}\" -> \"r\"",
            model.equation(self.residual_eq).name
        );
        out.push_str("}\n");
        out
    }
}

/// Argument of a state update or output function: either one of the
/// structure's states or one of its known inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arg {
    State(usize),
    Input(usize),
}

/// Distilled structure of the discrete-time state-space form: which states
/// exist, which known signals are consumed, and the argument list of every
/// state update and of the output map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpaceStructure {
    pub mso_id: usize,
    pub residual_eq: String,
    pub output_sensor: String,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub g_args: Vec<Vec<Arg>>,
    pub h_args: Vec<Arg>,
}

impl StateSpaceStructure {
    pub fn arg_name(&self, arg: Arg) -> &str {
        match arg {
            Arg::State(i) => &self.states[i],
            Arg::Input(i) => &self.inputs[i],
        }
    }

    /// Canonical text block; also the basis of the structure hash.
    pub fn to_text(&self) -> String {
        let mut out = String::from("statespace v1\n");
        let _ = writeln!(out, "mso = {}", self.mso_id);
        let _ = writeln!(out, "residual = {}", self.residual_eq);
        let _ = writeln!(out, "sensor = {}", self.output_sensor);
        let _ = writeln!(out, "states = {}", self.states.join(" "));
        let _ = writeln!(out, "inputs = {}", self.inputs.join(" "));
        for (i, args) in self.g_args.iter().enumerate() {
            let names: Vec<&str> = args.iter().map(|&a| self.arg_name(a)).collect();
            let _ = writeln!(out, "g {} : {}", self.states[i], names.join(" "));
        }
        let names: Vec<&str> = self.h_args.iter().map(|&a| self.arg_name(a)).collect();
        let _ = writeln!(out, "h : {}", names.join(" "));
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("statespace v1") {
            return Err("missing `statespace v1` header".into());
        }
        let mut mso_id = None;
        let mut residual_eq = None;
        let mut output_sensor = None;
        let mut states: Vec<String> = Vec::new();
        let mut inputs: Vec<String> = Vec::new();
        let mut g_lines: Vec<(String, Vec<String>)> = Vec::new();
        let mut h_line: Option<Vec<String>> = None;
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (head, rest) = line.split_once(|c| c == '=' || c == ':').ok_or_else(|| {
                format!("malformed line `{line}`")
            })?;
            let head = head.trim();
            let items: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
            match head.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["mso"] => mso_id = Some(rest.trim().parse().map_err(|e| format!("mso: {e}"))?),
                ["residual"] => residual_eq = Some(rest.trim().to_string()),
                ["sensor"] => output_sensor = Some(rest.trim().to_string()),
                ["states"] => states = items,
                ["inputs"] => inputs = items,
                ["g", state] => g_lines.push((state.to_string(), items)),
                ["h"] => h_line = Some(items),
                other => return Err(format!("unknown directive {other:?}")),
            }
        }
        let to_arg = |name: &str| -> Result<Arg, String> {
            if let Some(i) = states.iter().position(|s| s == name) {
                Ok(Arg::State(i))
            } else if let Some(i) = inputs.iter().position(|s| s == name) {
                Ok(Arg::Input(i))
            } else {
                Err(format!("argument `{name}` is neither state nor input"))
            }
        };
        let mut g_args = vec![Vec::new(); states.len()];
        for (state, args) in g_lines {
            let idx = states
                .iter()
                .position(|s| *s == state)
                .ok_or_else(|| format!("g-line for unknown state `{state}`"))?;
            g_args[idx] = args.iter().map(|a| to_arg(a)).collect::<Result<_, _>>()?;
        }
        let h_args = h_line
            .ok_or("missing h line")?
            .iter()
            .map(|a| to_arg(a))
            .collect::<Result<_, _>>()?;
        Ok(StateSpaceStructure {
            mso_id: mso_id.ok_or("missing mso id")?,
            residual_eq: residual_eq.ok_or("missing residual equation")?,
            output_sensor: output_sensor.ok_or("missing sensor")?,
            states,
            inputs,
            g_args,
            h_args,
        })
    }

    /// Hash of the canonical text, used to pair weight files with structures.
    pub fn structure_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.to_text().as_bytes());
        hex::encode(hasher.finalize())
    }
}

const INF: i64 = 1 << 40;

/// Hungarian algorithm on a square cost matrix; `None` when no perfect
/// matching of finite cost exists. Returns (total cost, column of each row).
fn assignment(cost: &[Vec<i64>]) -> Option<(i64, Vec<usize>)> {
    let n = cost.len();
    if n == 0 {
        return Some((0, Vec::new()));
    }
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut col_row = vec![0usize; n + 1]; // 1-based row matched to column, 0 = free
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if delta >= INF {
                return None;
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_col = vec![usize::MAX; n];
    let mut total = 0i64;
    for j in 1..=n {
        if col_row[j] != 0 {
            row_col[col_row[j] - 1] = j - 1;
            total += cost[col_row[j] - 1][j - 1];
        }
    }
    if total >= INF {
        return None;
    }
    Some((total, row_col))
}

struct RemainderProblem {
    eqs: Vec<EqId>,
    vars: Vec<VarId>,
    /// cost[i][j]: 0 for a plain incidence edge, 1 for a link equation
    /// solving its derivative (a differentiation), INF for non-edges.
    cost: Vec<Vec<i64>>,
}

fn remainder_problem(
    mso: &MsoSet,
    residual_eq: EqId,
    model: &StructuralModel,
) -> Result<RemainderProblem, CausalError> {
    let sub = mso.submodel(model);
    let remainder = sub.without(residual_eq);
    let eqs: Vec<EqId> = remainder.equations().to_vec();
    let vars: Vec<VarId> = remainder.unknowns();
    if eqs.len() != vars.len() {
        return Err(CausalError::NoPerfectMatching);
    }
    let links: BTreeMap<EqId, DiffLink> = model
        .links()
        .iter()
        .map(|l| (l.equation, *l))
        .collect();
    let cost = eqs
        .iter()
        .map(|&e| {
            vars.iter()
                .map(|&v| {
                    if !model.is_incident(e, v) {
                        INF
                    } else if links.get(&e).is_some_and(|l| l.derivative == v) {
                        1
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    Ok(RemainderProblem { eqs, vars, cost })
}

/// Perfect matching of the MSO set minus the residual equation onto its
/// unknowns. Among all perfect matchings the one with the fewest
/// differentiation nodes is chosen, tie-broken lexicographically over
/// (equation, variable) in declaration order.
pub fn match_remainder(
    mso: &MsoSet,
    residual_eq: EqId,
    model: &StructuralModel,
) -> Result<Matching, CausalError> {
    if !mso.contains(residual_eq) {
        return Err(CausalError::ResidualNotInSet(
            model.equation(residual_eq).name.clone(),
        ));
    }
    if model.link_equations().contains(&residual_eq) {
        return Err(CausalError::ResidualIsLink(
            model.equation(residual_eq).name.clone(),
        ));
    }
    let problem = remainder_problem(mso, residual_eq, model)?;
    let n = problem.eqs.len();
    let (mut budget, _) = assignment(&problem.cost).ok_or(CausalError::NoPerfectMatching)?;

    // Fix rows in order, always taking the smallest column that still admits
    // a completion within the optimal differentiation count.
    let mut chosen = vec![usize::MAX; n];
    let mut used_cols: Vec<usize> = Vec::new();
    for i in 0..n {
        let mut fixed = false;
        for j in 0..n {
            if used_cols.contains(&j) || problem.cost[i][j] >= INF {
                continue;
            }
            let rest_rows: Vec<usize> = (i + 1..n).collect();
            let rest_cols: Vec<usize> =
                (0..n).filter(|c| *c != j && !used_cols.contains(c)).collect();
            let reduced: Vec<Vec<i64>> = rest_rows
                .iter()
                .map(|&r| rest_cols.iter().map(|&c| problem.cost[r][c]).collect())
                .collect();
            if let Some((rest_cost, _)) = assignment(&reduced) {
                if problem.cost[i][j] + rest_cost == budget {
                    chosen[i] = j;
                    used_cols.push(j);
                    budget = rest_cost;
                    fixed = true;
                    break;
                }
            }
        }
        if !fixed {
            return Err(CausalError::NoPerfectMatching);
        }
    }

    Ok(Matching::new(
        (0..n)
            .map(|i| (problem.eqs[i], problem.vars[chosen[i]]))
            .collect(),
    ))
}

/// Builds the computational graph for an MSO set and a residual equation.
/// Fails when an algebraic loop (a cycle not cut by any integration node)
/// remains.
pub fn build_comp_graph(
    mso: &MsoSet,
    residual_eq: EqId,
    model: &StructuralModel,
) -> Result<CompGraph, CausalError> {
    let matching = match_remainder(mso, residual_eq, model)?;
    let links: BTreeMap<EqId, DiffLink> = model
        .links()
        .iter()
        .map(|l| (l.equation, *l))
        .collect();
    let mut integration_nodes = BTreeSet::new();
    let mut differentiation_nodes = BTreeSet::new();
    for &(e, v) in matching.pairs() {
        if let Some(link) = links.get(&e) {
            if link.state == v {
                integration_nodes.insert(e);
            } else {
                differentiation_nodes.insert(e);
            }
        }
    }
    let graph = CompGraph {
        mso_id: mso.id,
        equations: mso.equations.iter().copied().collect(),
        residual_eq,
        matching,
        integration_nodes,
        differentiation_nodes,
    };

    // Cycle check on the equation graph, with integration outputs treated as
    // step sources; any remaining strongly connected block is an algebraic
    // loop.
    let eqs = &graph.equations;
    let pos: BTreeMap<EqId, usize> = eqs.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); eqs.len()];
    for &e in eqs {
        if e == graph.residual_eq || graph.integration_nodes.contains(&e) {
            continue;
        }
        let produced = graph.matching.variable_of(e).expect("matched equation");
        for &consumer in eqs {
            if consumer == e {
                continue;
            }
            let consumes = model.is_incident(consumer, produced)
                && graph.matching.variable_of(consumer) != Some(produced);
            if consumes {
                succ[pos[&e]].push(pos[&consumer]);
            }
        }
    }
    if let Some(cycle) = find_cycle(&succ) {
        return Err(CausalError::AlgebraicLoop(
            cycle
                .into_iter()
                .map(|i| model.equation(eqs[i]).name.clone())
                .collect(),
        ));
    }
    Ok(graph)
}

/// Returns some cycle of the directed graph, if one exists.
fn find_cycle(succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut mark = vec![Mark::White; succ.len()];
    let mut stack_path: Vec<usize> = Vec::new();

    fn dfs(
        v: usize,
        succ: &[Vec<usize>],
        mark: &mut [Mark],
        path: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        mark[v] = Mark::Grey;
        path.push(v);
        for &w in &succ[v] {
            match mark[w] {
                Mark::Grey => {
                    let start = path.iter().position(|&p| p == w).unwrap();
                    return Some(path[start..].to_vec());
                }
                Mark::White => {
                    if let Some(c) = dfs(w, succ, mark, path) {
                        return Some(c);
                    }
                }
                Mark::Black => {}
            }
        }
        path.pop();
        mark[v] = Mark::Black;
        None
    }

    for v in 0..succ.len() {
        if mark[v] == Mark::White {
            if let Some(c) = dfs(v, succ, &mut mark, &mut stack_path) {
                return Some(c);
            }
        }
    }
    None
}

/// Causality classification of a computational graph.
pub fn causality_of(graph: &CompGraph) -> Causality {
    graph.causality()
}

/// A residual-generator candidate: an MSO set together with a sensor
/// equation whose graph has integral causality.
#[derive(Debug, Clone)]
pub struct IntegralCandidate {
    pub mso_id: usize,
    pub residual_eq: EqId,
    pub sensor: VarId,
    pub graph: CompGraph,
}

/// All (MSO, sensor equation) pairs whose computational graph has integral
/// causality. `sensor_filter`, when given, restricts the admissible measured
/// variables.
pub fn enumerate_integral_candidates(
    msos: &[MsoSet],
    model: &StructuralModel,
    sensor_filter: Option<&BTreeSet<VarId>>,
) -> Vec<IntegralCandidate> {
    let mut out = Vec::new();
    for mso in msos {
        for &(eq, sensor) in model.sensor_equations() {
            if !mso.contains(eq) {
                continue;
            }
            if let Some(filter) = sensor_filter {
                if !filter.contains(&sensor) {
                    continue;
                }
            }
            if let Ok(graph) = build_comp_graph(mso, eq, model) {
                if graph.causality() == Causality::Integral {
                    out.push(IntegralCandidate {
                        mso_id: mso.id,
                        residual_eq: eq,
                        sensor,
                        graph,
                    });
                }
            }
        }
    }
    out
}

/// All residual-equation choices of an MSO set (link equations excluded)
/// together with their graphs or construction errors.
pub fn classify_residual_choices(
    mso: &MsoSet,
    model: &StructuralModel,
) -> Vec<(EqId, Result<CompGraph, CausalError>)> {
    let links = model.link_equations();
    mso.equations
        .iter()
        .filter(|e| !links.contains(e))
        .map(|&e| (e, build_comp_graph(mso, e, model)))
        .collect()
}

/// Extracts the state-space structure of an integral-causality graph by
/// backtracking from each state derivative (and from the residual equation)
/// until a state or a known signal is reached.
pub fn extract_state_space(
    graph: &CompGraph,
    model: &StructuralModel,
) -> Result<StateSpaceStructure, CausalError> {
    if graph.causality() != Causality::Integral {
        return Err(CausalError::NotIntegral);
    }
    let links: BTreeMap<EqId, DiffLink> = model
        .links()
        .iter()
        .map(|l| (l.equation, *l))
        .collect();
    let state_vars: BTreeSet<VarId> = graph
        .integration_nodes
        .iter()
        .map(|e| links[e].state)
        .collect();
    let states: Vec<VarId> = state_vars.iter().copied().collect();

    let measured = model.measured_variable(graph.residual_eq).ok_or_else(|| {
        CausalError::ResidualNotSensor(model.equation(graph.residual_eq).name.clone())
    })?;

    // Backtrack through producers; stop at states and knowns.
    let backtrack = |start_eq: EqId, skip: Option<VarId>| -> BTreeSet<VarId> {
        let mut stops = BTreeSet::new();
        let mut visited_eqs = BTreeSet::new();
        let mut stack = vec![start_eq];
        while let Some(e) = stack.pop() {
            if !visited_eqs.insert(e) {
                continue;
            }
            let produced = graph.matching.variable_of(e);
            for &v in model.incident(e) {
                if Some(v) == produced || Some(v) == skip {
                    continue;
                }
                match model.variable(v).kind {
                    VarKind::Fault => {}
                    VarKind::Known => {
                        stops.insert(v);
                    }
                    _ if state_vars.contains(&v) => {
                        stops.insert(v);
                    }
                    _ => {
                        let producer = graph
                            .matching
                            .equation_of(v)
                            .expect("every unknown has a producer");
                        stack.push(producer);
                    }
                }
            }
        }
        stops
    };

    let mut g_arg_vars: Vec<BTreeSet<VarId>> = Vec::with_capacity(states.len());
    for &state in &states {
        let link = model
            .links()
            .iter()
            .find(|l| l.state == state)
            .expect("state has a link");
        let producer = graph
            .matching
            .equation_of(link.derivative)
            .expect("derivative produced in integral graph");
        g_arg_vars.push(backtrack(producer, None));
    }
    let h_arg_vars = backtrack(graph.residual_eq, Some(measured));

    let mut input_set: BTreeSet<VarId> = BTreeSet::new();
    for args in g_arg_vars.iter().chain(std::iter::once(&h_arg_vars)) {
        for &v in args {
            if model.variable(v).kind == VarKind::Known {
                input_set.insert(v);
            }
        }
    }
    let inputs: Vec<VarId> = input_set.iter().copied().collect();

    let to_args = |vars: &BTreeSet<VarId>| -> Vec<Arg> {
        let mut args: Vec<Arg> = vars
            .iter()
            .map(|v| {
                if let Some(i) = states.iter().position(|s| s == v) {
                    Arg::State(i)
                } else {
                    Arg::Input(inputs.iter().position(|u| u == v).expect("known input"))
                }
            })
            .collect();
        args.sort_unstable();
        args
    };

    let structure = StateSpaceStructure {
        mso_id: graph.mso_id,
        residual_eq: model.equation(graph.residual_eq).name.clone(),
        output_sensor: model.variable(measured).name.clone(),
        states: states.iter().map(|&v| model.variable(v).name.clone()).collect(),
        inputs: inputs.iter().map(|&v| model.variable(v).name.clone()).collect(),
        g_args: g_arg_vars.iter().map(&to_args).collect(),
        h_args: to_args(&h_arg_vars),
    };

    for (i, _) in structure.states.iter().enumerate() {
        let fed = structure
            .g_args
            .iter()
            .any(|args| args.contains(&Arg::State(i)))
            || structure.h_args.contains(&Arg::State(i));
        if !fed {
            return Err(CausalError::DeadState(structure.states[i].clone()));
        }
    }
    Ok(structure)
}
