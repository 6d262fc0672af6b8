//! Enumeration of minimal structurally over-determined (MSO) equation sets.
//!
//! An MSO set has redundancy one and loses all over-determination when any
//! single equation is removed; it is the minimal unit a residual generator
//! can be built from. Enumeration is top-down: starting from the
//! over-determined part, equations are removed one at a time and the search
//! recurses on the over-determined part of the remainder, memoizing visited
//! sets. A surplus-one set reached this way equals its own over-determined
//! part, so it is an MSO.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::dm::{dm_decompose, overdetermined_part, redundancy};
use crate::model::{EqId, StructuralModel, SubModel};

/// One MSO set with its stable index in enumeration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsoSet {
    pub id: usize,
    pub equations: BTreeSet<EqId>,
    /// Always one for an MSO set; kept for reporting.
    pub redundancy: usize,
}

impl MsoSet {
    pub fn contains(&self, eq: EqId) -> bool {
        self.equations.contains(&eq)
    }

    pub fn submodel<'m>(&self, model: &'m StructuralModel) -> SubModel<'m> {
        model.submodel(&self.equations).expect("MSO equations are valid")
    }
}

#[derive(Debug, Error)]
pub enum MsoError {
    #[error("MSO enumeration exceeded the cap of {cap} sets")]
    Overflow { cap: usize },
}

/// True when the submodel equals its own over-determined part.
pub fn is_pso(sub: &SubModel<'_>) -> bool {
    let dm = dm_decompose(sub);
    dm.exact_eqs.is_empty() && dm.under_eqs.is_empty()
}

/// Definitional MSO test: PSO, redundancy one, and removing any equation
/// leaves nothing over-determined.
pub fn is_mso(sub: &SubModel<'_>) -> bool {
    if sub.is_empty() || !is_pso(sub) || redundancy(sub) != 1 {
        return false;
    }
    sub.equations()
        .iter()
        .all(|&e| overdetermined_part(&sub.without(e)).is_empty())
}

/// Enumerates every MSO set of the model's over-determined part with the
/// default cap of 10,000 sets.
pub fn find_msos(model: &StructuralModel) -> Result<Vec<MsoSet>, MsoError> {
    find_msos_capped(model, 10_000)
}

/// Enumeration with an explicit cap; exceeding it is an error rather than a
/// silent truncation.
pub fn find_msos_capped(model: &StructuralModel, cap: usize) -> Result<Vec<MsoSet>, MsoError> {
    let full = model.all_equations();
    let over = overdetermined_part(&full);
    let mut found: BTreeSet<Vec<EqId>> = BTreeSet::new();
    let mut visited: BTreeSet<Vec<EqId>> = BTreeSet::new();
    if !over.is_empty() {
        search(&over, &mut visited, &mut found, cap)?;
    }
    Ok(found
        .into_iter()
        .enumerate()
        .map(|(id, eqs)| MsoSet {
            id,
            equations: eqs.into_iter().collect(),
            redundancy: 1,
        })
        .collect())
}

fn search(
    sub: &SubModel<'_>,
    visited: &mut BTreeSet<Vec<EqId>>,
    found: &mut BTreeSet<Vec<EqId>>,
    cap: usize,
) -> Result<(), MsoError> {
    let key: Vec<EqId> = sub.equations().to_vec();
    if !visited.insert(key.clone()) {
        return Ok(());
    }
    let phi = redundancy(sub);
    if phi == 1 {
        // Reached only through over-determined parts, so sub = sub+ here.
        found.insert(key);
        if found.len() > cap {
            return Err(MsoError::Overflow { cap });
        }
        return Ok(());
    }
    for &e in sub.equations() {
        let reduced = overdetermined_part(&sub.without(e));
        if !reduced.is_empty() {
            search(&reduced, visited, found, cap)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, two_state_example};

    #[test]
    fn example_model_is_pso_and_mso() {
        let m = two_state_example();
        let sub = m.all_equations();
        assert!(is_pso(&sub));
        assert!(is_mso(&sub));
    }

    #[test]
    fn example_minus_sensor_is_not_pso() {
        let m = two_state_example();
        let e3 = m.find_equation("e3").unwrap();
        let sub = m.all_equations().without(e3);
        assert!(!is_pso(&sub));
        assert!(!is_mso(&sub));
    }

    #[test]
    fn empty_model_is_vacuously_pso() {
        let m = parse_model("@variables\n@equations\n").unwrap();
        assert!(is_pso(&m.all_equations()));
        // but not an MSO: redundancy is zero
        assert!(!is_mso(&m.all_equations()));
    }

    #[test]
    fn pso_with_higher_redundancy_is_not_mso() {
        // Three sensors measuring one unknown: redundancy two.
        let m = parse_model(
            "@variables\n\
             x unknown\n\
             y1 known\n\
             y2 known\n\
             y3 known\n\
             @equations\n\
             e1 : y1 x\n\
             e2 : y2 x\n\
             e3 : y3 x\n\
             @sensors\n\
             e1 measures y1\n\
             e2 measures y2\n\
             e3 measures y3\n",
        )
        .unwrap();
        let sub = m.all_equations();
        assert!(is_pso(&sub));
        assert_eq!(redundancy(&sub), 2);
        assert!(!is_mso(&sub));
    }

    #[test]
    fn example_model_has_exactly_one_mso() {
        let m = two_state_example();
        let msos = find_msos(&m).unwrap();
        assert_eq!(msos.len(), 1);
        assert_eq!(msos[0].equations.len(), 5);
        assert!(is_mso(&msos[0].submodel(&m)));
    }

    #[test]
    fn two_independent_duplications_give_two_disjoint_msos() {
        // Two unknowns, each measured twice; six equations in all.
        let m = parse_model(
            "@variables\n\
             x unknown\n\
             w unknown\n\
             ya known\n\
             yb known\n\
             yc known\n\
             yd known\n\
             @equations\n\
             e1 : ya x\n\
             e2 : yb x\n\
             e3 : x w\n\
             e4 : yc w\n\
             e5 : yd w\n\
             e6 : x w\n\
             @sensors\n\
             e1 measures ya\n\
             e2 measures yb\n\
             e4 measures yc\n\
             e5 measures yd\n",
        )
        .unwrap();
        let msos = find_msos(&m).unwrap();
        // {e1,e2} and {e4,e5} are MSOs; the coupling equations add more.
        let e1 = m.find_equation("e1").unwrap();
        let e2 = m.find_equation("e2").unwrap();
        let e4 = m.find_equation("e4").unwrap();
        let e5 = m.find_equation("e5").unwrap();
        assert!(msos.iter().any(|s| s.equations == BTreeSet::from([e1, e2])));
        assert!(msos.iter().any(|s| s.equations == BTreeSet::from([e4, e5])));
        for s in &msos {
            assert!(is_mso(&s.submodel(&m)));
        }
    }

    #[test]
    fn no_redundancy_means_no_msos() {
        let m = parse_model("@variables\nx unknown\n@equations\ne1 : x\n").unwrap();
        assert!(find_msos(&m).unwrap().is_empty());
    }

    #[test]
    fn cap_overflow_is_an_error() {
        // Four sensors on one unknown: six two-equation MSOs.
        let m = parse_model(
            "@variables\n\
             x unknown\n\
             y1 known\n\
             y2 known\n\
             y3 known\n\
             y4 known\n\
             @equations\n\
             e1 : y1 x\n\
             e2 : y2 x\n\
             e3 : y3 x\n\
             e4 : y4 x\n\
             @sensors\n\
             e1 measures y1\n\
             e2 measures y2\n\
             e3 measures y3\n\
             e4 measures y4\n",
        )
        .unwrap();
        assert_eq!(find_msos(&m).unwrap().len(), 6);
        let err = find_msos_capped(&m, 3).unwrap_err();
        assert!(matches!(err, MsoError::Overflow { cap: 3 }));
    }

    #[test]
    fn enumeration_is_independent_of_declaration_order() {
        let forward = parse_model(
            "@variables\n\
             x unknown\n\
             y1 known\n\
             y2 known\n\
             y3 known\n\
             @equations\n\
             e1 : y1 x\n\
             e2 : y2 x\n\
             e3 : y3 x\n\
             @sensors\n\
             e1 measures y1\n\
             e2 measures y2\n\
             e3 measures y3\n",
        )
        .unwrap();
        let reversed = parse_model(
            "@variables\n\
             x unknown\n\
             y1 known\n\
             y2 known\n\
             y3 known\n\
             @equations\n\
             e3 : y3 x\n\
             e2 : y2 x\n\
             e1 : y1 x\n\
             @sensors\n\
             e3 measures y3\n\
             e2 measures y2\n\
             e1 measures y1\n",
        )
        .unwrap();
        let names = |m: &crate::model::StructuralModel| -> BTreeSet<Vec<String>> {
            find_msos(m)
                .unwrap()
                .into_iter()
                .map(|s| {
                    s.equations
                        .iter()
                        .map(|&e| m.equation(e).name.clone())
                        .collect::<Vec<_>>()
                })
                .map(|mut v| {
                    v.sort();
                    v
                })
                .collect()
        };
        assert_eq!(names(&forward), names(&reversed));
    }
}
