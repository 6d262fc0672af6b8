//! Maximum matching and Dulmage-Mendelsohn decomposition, plus the structural
//! redundancy, detectability, and isolability analyses built on them.
//!
//! Only the coarse decomposition (under- / exactly- / over-determined) is
//! computed; the fine block ordering inside the exactly determined part is
//! not used by any downstream step.

use std::collections::BTreeSet;

use crate::model::{EqId, StructuralModel, SubModel, VarId};

/// A matching between equations and unknown variables. Every pair is an
/// incidence edge; no equation or variable appears twice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pairs: Vec<(EqId, VarId)>,
}

impl Matching {
    pub fn new(mut pairs: Vec<(EqId, VarId)>) -> Self {
        pairs.sort_unstable();
        Matching { pairs }
    }

    pub fn pairs(&self) -> &[(EqId, VarId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn variable_of(&self, eq: EqId) -> Option<VarId> {
        self.pairs
            .iter()
            .find(|&&(e, _)| e == eq)
            .map(|&(_, v)| v)
    }

    pub fn equation_of(&self, var: VarId) -> Option<EqId> {
        self.pairs
            .iter()
            .find(|&&(_, v)| v == var)
            .map(|&(e, _)| e)
    }
}

/// Coarse Dulmage-Mendelsohn partition of a submodel.
#[derive(Debug, Clone)]
pub struct DmPartition {
    pub under_eqs: Vec<EqId>,
    pub under_vars: Vec<VarId>,
    pub exact_eqs: Vec<EqId>,
    pub exact_vars: Vec<VarId>,
    pub over_eqs: Vec<EqId>,
    pub over_vars: Vec<VarId>,
    pub matching: Matching,
}

impl DmPartition {
    /// Structural redundancy: surplus of the over-determined part.
    pub fn redundancy(&self) -> usize {
        self.over_eqs.len() - self.over_vars.len()
    }
}

/// Fault signature matrix: rows are residual candidates, columns faults,
/// entry true when the fault's equation belongs to the candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultSignatureMatrix {
    /// Candidate labels (caller-defined, e.g. MSO indices).
    pub rows: Vec<String>,
    /// Fault variable names in declaration order.
    pub fault_names: Vec<String>,
    pub entries: Vec<Vec<bool>>,
}

impl FaultSignatureMatrix {
    pub fn is_sensitive(&self, row: usize, col: usize) -> bool {
        self.entries[row][col]
    }

    pub fn fault_index(&self, name: &str) -> Option<usize> {
        self.fault_names.iter().position(|f| f == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("candidate");
        for f in &self.fault_names {
            out.push(',');
            out.push_str(f);
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(row);
            for cell in &self.entries[i] {
                out.push_str(if *cell { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<FaultSignatureMatrix, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("empty signature file")?;
        let fault_names: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut entries = Vec::new();
        for line in lines {
            let mut fields = line.split(',');
            rows.push(fields.next().ok_or("missing candidate name")?.to_string());
            let row: Vec<bool> = fields.map(|f| f.trim() == "1").collect();
            if row.len() != fault_names.len() {
                return Err(format!("row `{}` has {} entries", rows.last().unwrap(), row.len()));
            }
            entries.push(row);
        }
        Ok(FaultSignatureMatrix {
            rows,
            fault_names,
            entries,
        })
    }
}

/// Maximum-cardinality matching via repeated augmenting-path search.
///
/// Equations are scanned in declaration order and variables tried in
/// declaration order, so the result is deterministic.
pub fn maximum_matching(sub: &SubModel<'_>) -> Matching {
    let eqs = sub.equations();
    let vars = sub.unknowns();
    let var_pos = |v: VarId| vars.binary_search(&v).expect("induced variable");
    let adj: Vec<Vec<usize>> = eqs
        .iter()
        .map(|&e| sub.unknowns_of(e).into_iter().map(var_pos).collect())
        .collect();

    let mut var_match: Vec<Option<usize>> = vec![None; vars.len()];
    let mut matched = 0usize;
    for e in 0..eqs.len() {
        let mut seen = vec![false; vars.len()];
        if augment(e, &adj, &mut var_match, &mut seen) {
            matched += 1;
        }
    }
    let _ = matched;

    let pairs = var_match
        .iter()
        .enumerate()
        .filter_map(|(v, e)| e.map(|e| (eqs[e], vars[v])))
        .collect();
    Matching::new(pairs)
}

fn augment(e: usize, adj: &[Vec<usize>], var_match: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &v in &adj[e] {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        let free = match var_match[v] {
            None => true,
            Some(other) => augment(other, adj, var_match, seen),
        };
        if free {
            var_match[v] = Some(e);
            return true;
        }
    }
    false
}

/// Coarse DM decomposition from a maximum matching by alternating-path
/// reachability: free equations reach the over-determined part, free
/// variables the under-determined part.
pub fn dm_decompose(sub: &SubModel<'_>) -> DmPartition {
    let eqs = sub.equations();
    let vars = sub.unknowns();
    let matching = maximum_matching(sub);

    let eq_pos = |e: EqId| eqs.binary_search(&e).expect("member equation");
    let var_pos = |v: VarId| vars.binary_search(&v).expect("induced variable");
    let adj: Vec<Vec<usize>> = eqs
        .iter()
        .map(|&e| sub.unknowns_of(e).into_iter().map(var_pos).collect())
        .collect();
    let mut eq_of_var: Vec<Option<usize>> = vec![None; vars.len()];
    let mut var_of_eq: Vec<Option<usize>> = vec![None; eqs.len()];
    for &(e, v) in matching.pairs() {
        eq_of_var[var_pos(v)] = Some(eq_pos(e));
        var_of_eq[eq_pos(e)] = Some(var_pos(v));
    }

    // Over-determined: start from unmatched equations; equation -> any
    // incident variable, variable -> its matched equation.
    let mut over_eq = vec![false; eqs.len()];
    let mut over_var = vec![false; vars.len()];
    let mut stack: Vec<usize> = (0..eqs.len()).filter(|&e| var_of_eq[e].is_none()).collect();
    for &e in &stack {
        over_eq[e] = true;
    }
    while let Some(e) = stack.pop() {
        for &v in &adj[e] {
            if !over_var[v] {
                over_var[v] = true;
                if let Some(e2) = eq_of_var[v] {
                    if !over_eq[e2] {
                        over_eq[e2] = true;
                        stack.push(e2);
                    }
                }
            }
        }
    }

    // Under-determined: start from unmatched variables; variable -> any
    // incident equation, equation -> its matched variable.
    let mut var_adj: Vec<Vec<usize>> = vec![Vec::new(); vars.len()];
    for (e, row) in adj.iter().enumerate() {
        for &v in row {
            var_adj[v].push(e);
        }
    }
    let mut under_eq = vec![false; eqs.len()];
    let mut under_var = vec![false; vars.len()];
    let mut stack: Vec<usize> = (0..vars.len()).filter(|&v| eq_of_var[v].is_none()).collect();
    for &v in &stack {
        under_var[v] = true;
    }
    while let Some(v) = stack.pop() {
        for &e in &var_adj[v] {
            if !under_eq[e] {
                under_eq[e] = true;
                if let Some(v2) = var_of_eq[e] {
                    if !under_var[v2] {
                        under_var[v2] = true;
                        stack.push(v2);
                    }
                }
            }
        }
    }

    let collect_eqs = |mask: &dyn Fn(usize) -> bool| -> Vec<EqId> {
        (0..eqs.len()).filter(|&e| mask(e)).map(|e| eqs[e]).collect()
    };
    let collect_vars = |mask: &dyn Fn(usize) -> bool| -> Vec<VarId> {
        (0..vars.len()).filter(|&v| mask(v)).map(|v| vars[v]).collect()
    };

    DmPartition {
        under_eqs: collect_eqs(&|e| under_eq[e]),
        under_vars: collect_vars(&|v| under_var[v]),
        exact_eqs: collect_eqs(&|e| !under_eq[e] && !over_eq[e]),
        exact_vars: collect_vars(&|v| !under_var[v] && !over_var[v]),
        over_eqs: collect_eqs(&|e| over_eq[e]),
        over_vars: collect_vars(&|v| over_var[v]),
        matching,
    }
}

/// Degree of structural redundancy: surplus of the over-determined part.
pub fn redundancy(sub: &SubModel<'_>) -> usize {
    dm_decompose(sub).redundancy()
}

/// Submodel on the over-determined equations. Idempotent.
pub fn overdetermined_part<'m>(sub: &SubModel<'m>) -> SubModel<'m> {
    let dm = dm_decompose(sub);
    let keep: BTreeSet<EqId> = dm.over_eqs.iter().copied().collect();
    sub.restricted(&keep)
}

/// Faults whose entry equation lies in the over-determined part of the model.
pub fn detectable_faults(model: &StructuralModel) -> Vec<VarId> {
    let over: BTreeSet<EqId> = dm_decompose(&model.all_equations())
        .over_eqs
        .into_iter()
        .collect();
    model
        .fault_locations()
        .iter()
        .filter(|&&(_, e)| over.contains(&e))
        .map(|&(f, _)| f)
        .collect()
}

/// Entry (i, j) is true when fault i remains detectable after removing fault
/// j's equation from the model; the diagonal holds plain detectability.
pub fn isolability_matrix(model: &StructuralModel) -> Vec<Vec<bool>> {
    let faults = model.fault_locations();
    let detectable: BTreeSet<VarId> = detectable_faults(model).into_iter().collect();
    let mut out = vec![vec![false; faults.len()]; faults.len()];
    for (j, &(_, ej)) in faults.iter().enumerate() {
        let reduced = model.all_equations().without(ej);
        let over: BTreeSet<EqId> = dm_decompose(&reduced).over_eqs.into_iter().collect();
        for (i, &(fi, ei)) in faults.iter().enumerate() {
            out[i][j] = if i == j {
                detectable.contains(&fi)
            } else {
                over.contains(&ei)
            };
        }
    }
    out
}

/// Signature matrix over residual candidates: an entry is set when the
/// fault's equation belongs to the candidate's equation set.
pub fn fault_signature(
    candidates: &[(String, BTreeSet<EqId>)],
    model: &StructuralModel,
) -> FaultSignatureMatrix {
    let fault_names = model
        .fault_locations()
        .iter()
        .map(|&(f, _)| model.variable(f).name.clone())
        .collect();
    let entries = candidates
        .iter()
        .map(|(_, eqs)| {
            model
                .fault_locations()
                .iter()
                .map(|&(_, e)| eqs.contains(&e))
                .collect()
        })
        .collect();
    FaultSignatureMatrix {
        rows: candidates.iter().map(|(name, _)| name.clone()).collect(),
        fault_names,
        entries,
    }
}
