//! Structural models: bipartite equation/variable graphs with differential
//! constraints, fault annotations, and sensor equations.
//!
//! A structural model records only *which* variables occur in *which*
//! equations, never the analytic form. Differential constraints are ordinary
//! equations incident to exactly a state and its derivative, so matching and
//! causality analysis stay uniform graph operations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

/// Index of a variable in its model's declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// Index of an equation in its model's declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EqId(pub usize);

/// Role of a variable in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    /// Algebraic unknown.
    Unknown,
    /// State variable (has a linked derivative).
    State,
    /// Derivative of a state (has a linked state).
    Derivative,
    /// Known signal: actuator or sensor output.
    Known,
    /// Fault signal; annotation only, never matched.
    Fault,
}

impl VarKind {
    /// States and derivatives are unknowns for matching purposes.
    pub fn is_unknown(self) -> bool {
        matches!(self, VarKind::Unknown | VarKind::State | VarKind::Derivative)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            VarKind::Unknown => "unknown",
            VarKind::State => "state",
            VarKind::Derivative => "derivative",
            VarKind::Known => "known",
            VarKind::Fault => "fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equation {
    pub name: String,
}

/// One first-order differential constraint `derivative = d(state)/dt`,
/// realized by `equation`, which is incident to exactly these two variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffLink {
    pub state: VarId,
    pub derivative: VarId,
    pub equation: EqId,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("duplicate {what} id `{name}`")]
    DuplicateId { what: &'static str, name: String },
    #[error("dangling reference to `{name}`")]
    DanglingReference { name: String },
    #[error("unlinked derivative `{name}`")]
    UnlinkedDerivative { name: String },
    #[error("state `{name}` without derivative link")]
    UnlinkedState { name: String },
    #[error("invalid link ({state}, {derivative}) via {equation}: {msg}")]
    BadLink {
        state: String,
        derivative: String,
        equation: String,
        msg: String,
    },
    #[error("fault `{name}`: {msg}")]
    BadFault { name: String, msg: String },
    #[error("sensor equation `{equation}`: {msg}")]
    BadSensor { equation: String, msg: String },
    #[error("unknown equation id `{name}`")]
    UnknownEquation { name: String },
}

/// A bipartite equation/variable graph with differential links, fault
/// locations, and sensor equations. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralModel {
    equations: Vec<Equation>,
    variables: Vec<Variable>,
    /// Per equation, incident variables sorted by declaration order.
    incidence: Vec<Vec<VarId>>,
    links: Vec<DiffLink>,
    /// Fault variable -> equation where the fault enters, sorted by fault id.
    faults: Vec<(VarId, EqId)>,
    /// Sensor equation -> measured known variable, sorted by equation id.
    sensors: Vec<(EqId, VarId)>,
}

impl StructuralModel {
    /// Builds and validates a model from raw parts. Incidence rows are
    /// deduplicated and sorted; fault incidence entries implied by the fault
    /// map are inserted.
    pub fn new(
        equations: Vec<Equation>,
        variables: Vec<Variable>,
        mut incidence: Vec<Vec<VarId>>,
        links: Vec<DiffLink>,
        mut faults: Vec<(VarId, EqId)>,
        mut sensors: Vec<(EqId, VarId)>,
    ) -> Result<Self, ModelError> {
        if incidence.len() != equations.len() {
            return Err(ModelError::Syntax {
                line: 0,
                msg: format!(
                    "incidence has {} rows for {} equations",
                    incidence.len(),
                    equations.len()
                ),
            });
        }
        let mut seen = BTreeSet::new();
        for eq in &equations {
            if !seen.insert(eq.name.as_str()) {
                return Err(ModelError::DuplicateId {
                    what: "equation",
                    name: eq.name.clone(),
                });
            }
        }
        let mut seen = BTreeSet::new();
        for var in &variables {
            if !seen.insert(var.name.as_str()) {
                return Err(ModelError::DuplicateId {
                    what: "variable",
                    name: var.name.clone(),
                });
            }
        }
        for row in &incidence {
            for &v in row {
                if v.0 >= variables.len() {
                    return Err(ModelError::DanglingReference {
                        name: format!("variable #{}", v.0),
                    });
                }
            }
        }
        for &(f, e) in &faults {
            if f.0 >= variables.len() || e.0 >= equations.len() {
                return Err(ModelError::DanglingReference {
                    name: "fault mapping".into(),
                });
            }
            // The fault enters through its equation; make that visible in the
            // incidence so fault columns render like any other column.
            if !incidence[e.0].contains(&f) {
                incidence[e.0].push(f);
            }
        }
        for row in incidence.iter_mut() {
            row.sort_unstable();
            row.dedup();
        }
        faults.sort_unstable();
        sensors.sort_unstable();

        let model = StructuralModel {
            equations,
            variables,
            incidence,
            links,
            faults,
            sensors,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        // Differential links: bijection between states and derivatives, and
        // the defining equation touches exactly those two variables.
        let mut linked_states = BTreeSet::new();
        let mut linked_derivs = BTreeSet::new();
        for link in &self.links {
            let sv = self.variable(link.state);
            let dv = self.variable(link.derivative);
            let eq = self.equation(link.equation);
            if sv.kind != VarKind::State {
                return Err(ModelError::BadLink {
                    state: sv.name.clone(),
                    derivative: dv.name.clone(),
                    equation: eq.name.clone(),
                    msg: format!("`{}` is not a state", sv.name),
                });
            }
            if dv.kind != VarKind::Derivative {
                return Err(ModelError::BadLink {
                    state: sv.name.clone(),
                    derivative: dv.name.clone(),
                    equation: eq.name.clone(),
                    msg: format!("`{}` is not a derivative", dv.name),
                });
            }
            if !linked_states.insert(link.state) {
                return Err(ModelError::BadLink {
                    state: sv.name.clone(),
                    derivative: dv.name.clone(),
                    equation: eq.name.clone(),
                    msg: "state linked twice".into(),
                });
            }
            if !linked_derivs.insert(link.derivative) {
                return Err(ModelError::BadLink {
                    state: sv.name.clone(),
                    derivative: dv.name.clone(),
                    equation: eq.name.clone(),
                    msg: "derivative linked twice".into(),
                });
            }
            let row = &self.incidence[link.equation.0];
            let expected: Vec<VarId> = {
                let mut pair = vec![link.state, link.derivative];
                pair.sort_unstable();
                pair
            };
            if row != &expected {
                return Err(ModelError::BadLink {
                    state: sv.name.clone(),
                    derivative: dv.name.clone(),
                    equation: eq.name.clone(),
                    msg: "defining equation must be incident to exactly the state and its derivative"
                        .into(),
                });
            }
        }
        for (id, var) in self.variables.iter().enumerate() {
            match var.kind {
                VarKind::State if !linked_states.contains(&VarId(id)) => {
                    return Err(ModelError::UnlinkedState {
                        name: var.name.clone(),
                    });
                }
                VarKind::Derivative if !linked_derivs.contains(&VarId(id)) => {
                    return Err(ModelError::UnlinkedDerivative {
                        name: var.name.clone(),
                    });
                }
                _ => {}
            }
        }

        // Faults: declared fault variables map to exactly one equation, and
        // fault variables never occur outside their own equation.
        let mut mapped = BTreeSet::new();
        for &(f, e) in &self.faults {
            let fv = self.variable(f);
            if fv.kind != VarKind::Fault {
                return Err(ModelError::BadFault {
                    name: fv.name.clone(),
                    msg: "mapped variable is not of fault kind".into(),
                });
            }
            if !mapped.insert(f) {
                return Err(ModelError::BadFault {
                    name: fv.name.clone(),
                    msg: "fault maps to more than one equation".into(),
                });
            }
            for (row_eq, row) in self.incidence.iter().enumerate() {
                if row.contains(&f) && row_eq != e.0 {
                    return Err(ModelError::BadFault {
                        name: fv.name.clone(),
                        msg: format!(
                            "appears in `{}` but is declared in `{}`",
                            self.equations[row_eq].name,
                            self.equation(e).name
                        ),
                    });
                }
            }
        }
        for (id, var) in self.variables.iter().enumerate() {
            if var.kind == VarKind::Fault && !mapped.contains(&VarId(id)) {
                return Err(ModelError::BadFault {
                    name: var.name.clone(),
                    msg: "no location declared".into(),
                });
            }
        }

        // Sensor equations: measured variable is known, incident, and the only
        // sensor-kind known in the row.
        let sensor_vars: BTreeSet<VarId> = self.sensors.iter().map(|&(_, v)| v).collect();
        let mut measured_by = BTreeSet::new();
        for &(e, v) in &self.sensors {
            if e.0 >= self.equations.len() || v.0 >= self.variables.len() {
                return Err(ModelError::DanglingReference {
                    name: "sensor mapping".into(),
                });
            }
            let eq_name = &self.equation(e).name;
            if self.variable(v).kind != VarKind::Known {
                return Err(ModelError::BadSensor {
                    equation: eq_name.clone(),
                    msg: format!("measured variable `{}` is not known", self.variable(v).name),
                });
            }
            if !self.incidence[e.0].contains(&v) {
                return Err(ModelError::BadSensor {
                    equation: eq_name.clone(),
                    msg: format!("not incident to measured variable `{}`", self.variable(v).name),
                });
            }
            if !measured_by.insert(e) {
                return Err(ModelError::BadSensor {
                    equation: eq_name.clone(),
                    msg: "measures more than one variable".into(),
                });
            }
            let sensor_knowns = self.incidence[e.0]
                .iter()
                .filter(|id| sensor_vars.contains(id))
                .count();
            if sensor_knowns != 1 {
                return Err(ModelError::BadSensor {
                    equation: eq_name.clone(),
                    msg: "must be incident to exactly one sensor variable".into(),
                });
            }
        }
        Ok(())
    }

    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn equation(&self, id: EqId) -> &Equation {
        &self.equations[id.0]
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn equation_ids(&self) -> impl Iterator<Item = EqId> {
        (0..self.equations.len()).map(EqId)
    }

    pub fn variable_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len()).map(VarId)
    }

    pub fn find_equation(&self, name: &str) -> Option<EqId> {
        self.equations.iter().position(|e| e.name == name).map(EqId)
    }

    pub fn find_variable(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    /// Variables incident to `eq`, in declaration order.
    pub fn incident(&self, eq: EqId) -> &[VarId] {
        &self.incidence[eq.0]
    }

    pub fn is_incident(&self, eq: EqId, var: VarId) -> bool {
        self.incidence[eq.0].binary_search(&var).is_ok()
    }

    pub fn links(&self) -> &[DiffLink] {
        &self.links
    }

    pub fn link_equations(&self) -> BTreeSet<EqId> {
        self.links.iter().map(|l| l.equation).collect()
    }

    /// Fault variable -> equation where it enters.
    pub fn fault_locations(&self) -> &[(VarId, EqId)] {
        &self.faults
    }

    /// Sensor equation -> measured known variable.
    pub fn sensor_equations(&self) -> &[(EqId, VarId)] {
        &self.sensors
    }

    pub fn measured_variable(&self, eq: EqId) -> Option<VarId> {
        self.sensors.iter().find(|&&(e, _)| e == eq).map(|&(_, v)| v)
    }

    /// The full model as a submodel.
    pub fn all_equations(&self) -> SubModel<'_> {
        SubModel {
            model: self,
            eqs: self.equation_ids().collect(),
        }
    }

    /// Submodel on a subset of equations. Induced variables are recomputed
    /// from the incidence, never stored.
    pub fn submodel(&self, eqs: &BTreeSet<EqId>) -> Result<SubModel<'_>, ModelError> {
        for &e in eqs {
            if e.0 >= self.equations.len() {
                return Err(ModelError::UnknownEquation {
                    name: format!("#{}", e.0),
                });
            }
        }
        Ok(SubModel {
            model: self,
            eqs: eqs.iter().copied().collect(),
        })
    }

    /// Incidence matrix with columns grouped unknowns, faults, knowns.
    pub fn incidence_matrix(&self) -> IncidenceMatrix {
        let mut cols: Vec<VarId> = Vec::new();
        cols.extend(self.variable_ids().filter(|&v| self.variable(v).kind.is_unknown()));
        cols.extend(self.variable_ids().filter(|&v| self.variable(v).kind == VarKind::Fault));
        cols.extend(self.variable_ids().filter(|&v| self.variable(v).kind == VarKind::Known));
        let rows: Vec<EqId> = self.equation_ids().collect();
        let mut data = vec![vec![false; cols.len()]; rows.len()];
        for (i, &e) in rows.iter().enumerate() {
            for (j, &v) in cols.iter().enumerate() {
                data[i][j] = self.is_incident(e, v);
            }
        }
        IncidenceMatrix { rows, cols, data }
    }
}

/// Boolean incidence view with row/column labels.
#[derive(Debug, Clone)]
pub struct IncidenceMatrix {
    pub rows: Vec<EqId>,
    pub cols: Vec<VarId>,
    pub data: Vec<Vec<bool>>,
}

impl IncidenceMatrix {
    pub fn true_entries(&self) -> usize {
        self.data.iter().flatten().filter(|&&b| b).count()
    }

    pub fn to_csv(&self, model: &StructuralModel) -> String {
        let mut out = String::new();
        out.push_str("equation");
        for &c in &self.cols {
            let _ = write!(out, ",{}", model.variable(c).name);
        }
        out.push('\n');
        for (i, &r) in self.rows.iter().enumerate() {
            out.push_str(&model.equation(r).name);
            for cell in &self.data[i] {
                out.push_str(if *cell { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

/// A view over a subset of a model's equations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubModel<'m> {
    model: &'m StructuralModel,
    eqs: Vec<EqId>,
}

impl<'m> SubModel<'m> {
    pub fn model(&self) -> &'m StructuralModel {
        self.model
    }

    /// Equations of this submodel, sorted by declaration order.
    pub fn equations(&self) -> &[EqId] {
        &self.eqs
    }

    pub fn contains(&self, eq: EqId) -> bool {
        self.eqs.binary_search(&eq).is_ok()
    }

    pub fn len(&self) -> usize {
        self.eqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eqs.is_empty()
    }

    /// Induced unknown variables: unknowns incident to any member equation.
    pub fn unknowns(&self) -> Vec<VarId> {
        let mut set = BTreeSet::new();
        for &e in &self.eqs {
            for &v in self.model.incident(e) {
                if self.model.variable(v).kind.is_unknown() {
                    set.insert(v);
                }
            }
        }
        set.into_iter().collect()
    }

    /// Known variables incident to any member equation.
    pub fn knowns(&self) -> Vec<VarId> {
        let mut set = BTreeSet::new();
        for &e in &self.eqs {
            for &v in self.model.incident(e) {
                if self.model.variable(v).kind == VarKind::Known {
                    set.insert(v);
                }
            }
        }
        set.into_iter().collect()
    }

    /// Differential links whose defining equation is a member. Both endpoint
    /// columns then survive automatically.
    pub fn active_links(&self) -> Vec<DiffLink> {
        self.model
            .links()
            .iter()
            .filter(|l| self.contains(l.equation))
            .copied()
            .collect()
    }

    /// Unknown variables incident to `eq` within this submodel.
    pub fn unknowns_of(&self, eq: EqId) -> Vec<VarId> {
        self.model
            .incident(eq)
            .iter()
            .filter(|&&v| self.model.variable(v).kind.is_unknown())
            .copied()
            .collect()
    }

    /// Submodel restricted further, dropping the given equation.
    pub fn without(&self, eq: EqId) -> SubModel<'m> {
        SubModel {
            model: self.model,
            eqs: self.eqs.iter().copied().filter(|&e| e != eq).collect(),
        }
    }

    pub fn restricted(&self, eqs: &BTreeSet<EqId>) -> SubModel<'m> {
        SubModel {
            model: self.model,
            eqs: self.eqs.iter().copied().filter(|e| eqs.contains(e)).collect(),
        }
    }

    pub fn equation_set(&self) -> BTreeSet<EqId> {
        self.eqs.iter().copied().collect()
    }
}

/// Parses the line-oriented model-file format.
///
/// Sections are introduced by `@variables`, `@equations`, `@links`,
/// `@faults`, `@sensors`. `#` starts a comment. See `serialize_model` for the
/// canonical form.
pub fn parse_model(text: &str) -> Result<StructuralModel, ModelError> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Variables,
        Equations,
        Links,
        Faults,
        Sensors,
    }

    let mut section = Section::None;
    let mut variables: Vec<Variable> = Vec::new();
    let mut equations: Vec<Equation> = Vec::new();
    let mut var_index: BTreeMap<String, VarId> = BTreeMap::new();
    let mut eq_index: BTreeMap<String, EqId> = BTreeMap::new();
    let mut incidence: Vec<Vec<VarId>> = Vec::new();
    let mut links: Vec<DiffLink> = Vec::new();
    let mut faults: Vec<(VarId, EqId)> = Vec::new();
    let mut sensors: Vec<(EqId, VarId)> = Vec::new();

    let syntax = |line: usize, msg: &str| ModelError::Syntax {
        line,
        msg: msg.to_string(),
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('@') {
            section = match header {
                "variables" => Section::Variables,
                "equations" => Section::Equations,
                "links" => Section::Links,
                "faults" => Section::Faults,
                "sensors" => Section::Sensors,
                other => return Err(syntax(line, &format!("unknown section `@{other}`"))),
            };
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match section {
            Section::None => return Err(syntax(line, "content before any section header")),
            Section::Variables => {
                if tokens.len() != 2 {
                    return Err(syntax(line, "expected `name kind`"));
                }
                let kind = match tokens[1] {
                    "unknown" => VarKind::Unknown,
                    "state" => VarKind::State,
                    "derivative" => VarKind::Derivative,
                    "known" => VarKind::Known,
                    "fault" => VarKind::Fault,
                    other => return Err(syntax(line, &format!("unknown variable kind `{other}`"))),
                };
                let name = tokens[0].to_string();
                if var_index.contains_key(&name) {
                    return Err(ModelError::DuplicateId {
                        what: "variable",
                        name,
                    });
                }
                var_index.insert(name.clone(), VarId(variables.len()));
                variables.push(Variable { name, kind });
            }
            Section::Equations => {
                if tokens.len() < 2 || tokens[1] != ":" {
                    return Err(syntax(line, "expected `eqname : var1 var2 ...`"));
                }
                let name = tokens[0].to_string();
                if eq_index.contains_key(&name) {
                    return Err(ModelError::DuplicateId {
                        what: "equation",
                        name,
                    });
                }
                let mut row = Vec::new();
                for tok in &tokens[2..] {
                    let v = var_index.get(*tok).copied().ok_or_else(|| {
                        ModelError::DanglingReference {
                            name: (*tok).to_string(),
                        }
                    })?;
                    row.push(v);
                }
                eq_index.insert(name.clone(), EqId(equations.len()));
                equations.push(Equation { name });
                incidence.push(row);
            }
            Section::Links => {
                if tokens.len() != 4 || tokens[2] != "via" {
                    return Err(syntax(line, "expected `state derivative via eqname`"));
                }
                let lookup_var = |name: &str| {
                    var_index
                        .get(name)
                        .copied()
                        .ok_or_else(|| ModelError::DanglingReference { name: name.into() })
                };
                let state = lookup_var(tokens[0])?;
                let derivative = lookup_var(tokens[1])?;
                let equation = eq_index.get(tokens[3]).copied().ok_or_else(|| {
                    ModelError::DanglingReference {
                        name: tokens[3].into(),
                    }
                })?;
                links.push(DiffLink {
                    state,
                    derivative,
                    equation,
                });
            }
            Section::Faults => {
                if tokens.len() != 3 || tokens[1] != "in" {
                    return Err(syntax(line, "expected `faultname in eqname`"));
                }
                let fault = var_index.get(tokens[0]).copied().ok_or_else(|| {
                    ModelError::DanglingReference {
                        name: tokens[0].into(),
                    }
                })?;
                let eq = eq_index.get(tokens[2]).copied().ok_or_else(|| {
                    ModelError::DanglingReference {
                        name: tokens[2].into(),
                    }
                })?;
                faults.push((fault, eq));
            }
            Section::Sensors => {
                if tokens.len() != 3 || tokens[1] != "measures" {
                    return Err(syntax(line, "expected `eqname measures knownvar`"));
                }
                let eq = eq_index.get(tokens[0]).copied().ok_or_else(|| {
                    ModelError::DanglingReference {
                        name: tokens[0].into(),
                    }
                })?;
                let var = var_index.get(tokens[2]).copied().ok_or_else(|| {
                    ModelError::DanglingReference {
                        name: tokens[2].into(),
                    }
                })?;
                sensors.push((eq, var));
            }
        }
    }

    StructuralModel::new(equations, variables, incidence, links, faults, sensors)
}

/// Canonical text form: declaration order preserved, incidence rows sorted by
/// variable declaration order. `parse_model(serialize_model(m)) == m`.
pub fn serialize_model(model: &StructuralModel) -> String {
    let mut out = String::new();
    out.push_str("@variables\n");
    for var in model.variables() {
        let _ = writeln!(out, "{} {}", var.name, var.kind.keyword());
    }
    out.push_str("@equations\n");
    for e in model.equation_ids() {
        let vars: Vec<&str> = model
            .incident(e)
            .iter()
            .map(|&v| model.variable(v).name.as_str())
            .collect();
        let _ = writeln!(out, "{} : {}", model.equation(e).name, vars.join(" "));
    }
    if !model.links().is_empty() {
        out.push_str("@links\n");
        for link in model.links() {
            let _ = writeln!(
                out,
                "{} {} via {}",
                model.variable(link.state).name,
                model.variable(link.derivative).name,
                model.equation(link.equation).name
            );
        }
    }
    if !model.fault_locations().is_empty() {
        out.push_str("@faults\n");
        for &(f, e) in model.fault_locations() {
            let _ = writeln!(
                out,
                "{} in {}",
                model.variable(f).name,
                model.equation(e).name
            );
        }
    }
    if !model.sensor_equations().is_empty() {
        out.push_str("@sensors\n");
        for &(e, v) in model.sensor_equations() {
            let _ = writeln!(
                out,
                "{} measures {}",
                model.equation(e).name,
                model.variable(v).name
            );
        }
    }
    out
}

/// The two-state example model: one actuator drives the first state, the
/// second state follows the first, a single sensor reads the second state.
///
/// ```text
/// e1: dx1 = g1(u)    e4: dx1 = d(x1)/dt
/// e2: dx2 = g2(x1)   e5: dx2 = d(x2)/dt
/// e3: y = x2
/// ```
pub fn two_state_example() -> StructuralModel {
    parse_model(
        "@variables\n\
         x1 state\n\
         dx1 derivative\n\
         x2 state\n\
         dx2 derivative\n\
         u known\n\
         y known\n\
         @equations\n\
         e1 : dx1 u\n\
         e2 : dx2 x1\n\
         e3 : y x2\n\
         e4 : x1 dx1\n\
         e5 : x2 dx2\n\
         @links\n\
         x1 dx1 via e4\n\
         x2 dx2 via e5\n\
         @sensors\n\
         e3 measures y\n",
    )
    .expect("two-state example is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_example_shape() {
        let m = two_state_example();
        assert_eq!(m.equations().len(), 5);
        assert_eq!(m.links().len(), 2);
        assert_eq!(m.sensor_equations().len(), 1);
        let states = m
            .variable_ids()
            .filter(|&v| m.variable(v).kind == VarKind::State)
            .count();
        assert_eq!(states, 2);
    }

    #[test]
    fn incidence_matrix_of_example() {
        let m = two_state_example();
        let inc = m.incidence_matrix();
        assert_eq!(inc.rows.len(), 5);
        assert_eq!(inc.cols.len(), 6); // 4 unknowns + 2 knowns
        assert_eq!(inc.true_entries(), 10);
        // unknown columns grouped before knowns
        let kinds: Vec<VarKind> = inc.cols.iter().map(|&v| m.variable(v).kind).collect();
        let first_known = kinds.iter().position(|k| *k == VarKind::Known).unwrap();
        assert!(kinds[..first_known].iter().all(|k| k.is_unknown()));
        assert_eq!(first_known, 4);
    }

    #[test]
    fn empty_model_is_valid() {
        let m = parse_model("@variables\n@equations\n").unwrap();
        assert!(m.equations().is_empty());
        let inc = m.incidence_matrix();
        assert_eq!(inc.rows.len(), 0);
        assert_eq!(inc.cols.len(), 0);
    }

    #[test]
    fn unlinked_derivative_rejected() {
        let err = parse_model(
            "@variables\n\
             dx1 derivative\n\
             u known\n\
             @equations\n\
             e1 : dx1 u\n",
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::UnlinkedDerivative { .. }), "{err}");
    }

    #[test]
    fn state_without_link_rejected() {
        let err = parse_model("@variables\nx1 state\n@equations\n").unwrap_err();
        assert!(matches!(err, ModelError::UnlinkedState { .. }), "{err}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_model("@variables\nx1\n").unwrap_err();
        match err {
            ModelError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = parse_model("@variables\nu known\nu known\n").unwrap_err();
        assert!(matches!(err, ModelError::DuplicateId { .. }));
        let err = parse_model(
            "@variables\nu known\n@equations\ne1 : u\ne1 : u\n",
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DuplicateId { .. }));
    }

    #[test]
    fn dangling_reference_rejected() {
        let err = parse_model("@variables\nu known\n@equations\ne1 : u v\n").unwrap_err();
        assert!(matches!(err, ModelError::DanglingReference { .. }));
    }

    #[test]
    fn link_equation_incidence_enforced() {
        // e4 carries an extra variable next to the state/derivative pair.
        let err = parse_model(
            "@variables\n\
             x1 state\n\
             dx1 derivative\n\
             u known\n\
             @equations\n\
             e1 : dx1 u\n\
             e4 : x1 dx1 u\n\
             @links\n\
             x1 dx1 via e4\n",
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::BadLink { .. }), "{err}");
    }

    #[test]
    fn roundtrip_example() {
        let m = two_state_example();
        let text = serialize_model(&m);
        let m2 = parse_model(&text).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn roundtrip_empty() {
        let m = parse_model("@variables\n@equations\n").unwrap();
        let text = serialize_model(&m);
        assert_eq!(parse_model(&text).unwrap(), m);
    }

    #[test]
    fn submodel_without_sensor_equation() {
        let m = two_state_example();
        let e3 = m.find_equation("e3").unwrap();
        let sub = m.all_equations().without(e3);
        assert_eq!(sub.len(), 4);
        let names: Vec<&str> = sub
            .unknowns()
            .iter()
            .map(|&v| m.variable(v).name.as_str())
            .collect();
        assert_eq!(names, vec!["x1", "dx1", "x2", "dx2"]);
    }

    #[test]
    fn full_submodel_is_identity() {
        let m = two_state_example();
        let sub = m.all_equations();
        assert_eq!(sub.len(), m.equations().len());
        assert_eq!(sub.unknowns().len(), 4);
        assert_eq!(sub.active_links().len(), 2);
    }

    #[test]
    fn fault_incidence_implied_by_location() {
        let m = parse_model(
            "@variables\n\
             x unknown\n\
             y known\n\
             y2 known\n\
             f fault\n\
             @equations\n\
             e1 : y x\n\
             e2 : y2 x\n\
             @faults\n\
             f in e2\n\
             @sensors\n\
             e1 measures y\n\
             e2 measures y2\n",
        )
        .unwrap();
        let f = m.find_variable("f").unwrap();
        let e2 = m.find_equation("e2").unwrap();
        assert!(m.is_incident(e2, f));
        // and the serialized form keeps it there
        let m2 = parse_model(&serialize_model(&m)).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn links_appear_in_incidence_of_defining_equation() {
        let m = two_state_example();
        for link in m.links() {
            assert!(m.is_incident(link.equation, link.state));
            assert!(m.is_incident(link.equation, link.derivative));
        }
    }
}
