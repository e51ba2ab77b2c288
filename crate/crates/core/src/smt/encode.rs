use thiserror::Error;

use super::names;
use super::term::{self, add, and, congruent, eq, ge, implies, int, le, lt, mul, not, sub, sum, var, Sort, Term};
use super::{ConstraintSet, Tag};
use crate::model::{ConfigError, NetworkConfig};
use crate::scenario::{ScenarioError, ScenarioTrace};

/// Ratio allowed between emitted transition assertions and
/// [`constraint_count_bound`](crate::model::constraint_count_bound).
///
/// The bound charges 6 per slice, `3^r_k` per partition, `3^K` for the
/// residual and `2 n_mu` per service each step. Emission spends up to 15 per
/// slice (four user-count cases, two window-count cases, three usage cases,
/// two signals, exclusion, two frames, the departure flag), one per partition
/// combination, one per residual combination, at most two per slice for
/// assignment, and one each for arrivals and the overuse flag. Doubling every
/// term of the bound covers all of these.
pub const COUNT_CONSTANT: u64 = 2;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
}

/// Slice variable by zero-based index.
fn sv(name: &str, i: usize, j: usize) -> Term {
    var(names::slice(name, i + 1, j))
}

/// Builds the full constraint system for `config` under `scenario`.
pub fn encode(config: &NetworkConfig, scenario: &ScenarioTrace) -> Result<ConstraintSet, EncodeError> {
    config.validate()?;
    scenario.check_shape(config)?;

    let mut cs = ConstraintSet::default();
    cs.comments.push(format!(
        "config {} (S,K,N)=({},{},{}) T_P={} T={} seed={}",
        if config.name.is_empty() { "-" } else { &config.name },
        config.num_services(),
        config.num_partitions(),
        config.num_slices(),
        config.total_prbs,
        config.horizon,
        scenario.seed
    ));

    initial(config, &mut cs);
    let partitions = config.partition_index();
    let services = config.service_index();
    for j in 1..=config.horizon() {
        step(config, scenario, &partitions, &services, j, &mut cs);
    }
    Ok(cs)
}

fn initial(config: &NetworkConfig, cs: &mut ConstraintSet) {
    for i in 0..config.num_slices() {
        let w = config.w_hat(i);
        for (name, value) in [("usr", 0), ("usg", 0), ("ent", 0), ("shr", w), ("resi", w)] {
            cs.declare(names::slice(name, i + 1, 0), Sort::Int);
            cs.assert(Tag::Initial, eq(sv(name, i, 0), int(value)));
        }
    }
    for (k, members) in config.partition_index().iter().enumerate() {
        cs.declare(names::pt(k + 1, 0), Sort::Int);
        let total: i64 = members.iter().map(|&i| config.w_hat(i)).sum();
        cs.assert(Tag::Initial, eq(var(names::pt(k + 1, 0)), int(total)));
    }
    let rp0 = config.initial_residual();
    cs.declare(names::rp(0), Sort::Int);
    cs.assert(Tag::Initial, eq(var(names::rp(0)), int(rp0)));
    cs.declare(names::ovr(0), Sort::Bool);
    cs.assert(
        Tag::Initial,
        eq(var(names::ovr(0)), Term::Bool(config.is_overused(rp0))),
    );
}

fn step(
    config: &NetworkConfig,
    scenario: &ScenarioTrace,
    partitions: &[Vec<usize>],
    services: &[Vec<usize>],
    j: usize,
    cs: &mut ConstraintSet,
) {
    let p = j - 1;
    let n = config.num_slices();

    for mu in 0..config.num_services() {
        cs.declare(names::service_entry(mu + 1, j), Sort::Bool);
    }
    for (i, _) in config.slices.iter().enumerate() {
        for (name, sort) in [
            ("lv", Sort::Bool),
            ("en", Sort::Bool),
            ("usr", Sort::Int),
            ("ent", Sort::Int),
            ("usg", Sort::Int),
            ("resim", Sort::Int),
            ("top", Sort::Bool),
            ("ramp", Sort::Bool),
            ("shr", Sort::Int),
            ("resi", Sort::Int),
        ] {
            cs.declare(names::slice(name, i + 1, j), sort);
        }
    }
    for owned in services.iter().filter(|o| o.len() > 1) {
        for &i in owned {
            cs.declare(names::slice("sel", i + 1, j), Sort::Bool);
        }
    }
    for k in 0..partitions.len() {
        cs.declare(names::pt(k + 1, j), Sort::Int);
    }
    cs.declare(names::rp(j), Sort::Int);
    cs.declare(names::ovr(j), Sort::Bool);

    // exogenous flags
    for mu in 0..config.num_services() {
        let e = var(names::service_entry(mu + 1, j));
        cs.assert(Tag::Scenario, eq(e, Term::Bool(scenario.arrival(mu, j))));
    }
    for i in 0..n {
        cs.assert(
            Tag::Scenario,
            eq(sv("lv", i, j), Term::Bool(scenario.departure(i, j))),
        );
    }

    // overuse of the residual partition, judged on the previous share
    let x = config.overuse_fraction;
    let ovr = var(names::ovr(j));
    cs.assert(
        Tag::Constraint("L1,4"),
        eq(
            ovr.clone(),
            lt(
                mul(*x.denom(), var(names::rp(p))),
                int(*x.numer() * i64::from(config.total_prbs)),
            ),
        ),
    );

    // user assignment
    for (mu, owned) in services.iter().enumerate() {
        let e = var(names::service_entry(mu + 1, j));
        if let [i] = owned[..] {
            cs.assert(
                Tag::Constraint("L3,4"),
                eq(sv("en", i, j), and([not(ovr.clone()), e.clone()])),
            );
            continue;
        }
        for (pos, &b) in owned.iter().enumerate() {
            let usr_b = sv("usr", b, p);
            let cmp = owned.iter().enumerate().filter(|&(q, _)| q != pos).map(|(q, &g)| {
                if q < pos {
                    lt(usr_b.clone(), sv("usr", g, p))
                } else {
                    le(usr_b.clone(), sv("usr", g, p))
                }
            });
            let sel = sv("sel", b, j);
            cs.assert(Tag::Constraint("L3,2"), eq(sel.clone(), and(cmp)));
            cs.assert(
                Tag::Constraint("L3,2"),
                eq(sv("en", b, j), and([not(ovr.clone()), e.clone(), sel])),
            );
        }
    }

    // per-slice layer-one rules
    for (i, spec) in config.slices.iter().enumerate() {
        let en = sv("en", i, j);
        let lv = sv("lv", i, j);
        let usr = sv("usr", i, j);
        let usr_p = sv("usr", i, p);
        let l11 = Tag::Constraint("L1,1");
        cs.assert(
            l11,
            implies(
                and([en.clone(), not(lv.clone())]),
                eq(usr.clone(), add(usr_p.clone(), int(1))),
            ),
        );
        cs.assert(
            l11,
            implies(
                and([not(en.clone()), lv.clone()]),
                eq(usr.clone(), sub(usr_p.clone(), int(1))),
            ),
        );
        cs.assert(
            l11,
            implies(and([en.clone(), lv.clone()]), eq(usr.clone(), usr_p.clone())),
        );
        cs.assert(
            l11,
            implies(
                and([not(en.clone()), not(lv.clone())]),
                eq(usr.clone(), usr_p),
            ),
        );

        let ent = sv("ent", i, j);
        let t_win = spec.t_win as usize;
        let (with_entry, without) = if j % t_win == 1 % t_win {
            (int(1), int(0))
        } else {
            let ent_p = sv("ent", i, p);
            (add(ent_p.clone(), int(1)), ent_p)
        };
        cs.assert(Tag::Constraint("L1,2"), implies(en.clone(), eq(ent.clone(), with_entry)));
        cs.assert(Tag::Constraint("L1,2"), implies(not(en.clone()), eq(ent.clone(), without)));

        let m = i64::from(spec.m);
        let usg = sv("usg", i, j);
        let usg_p = sv("usg", i, p);
        let resim = sv("resim", i, j);
        let resi_p = sv("resi", i, p);
        let inc = and([en.clone(), not(lv.clone()), congruent(usr.clone(), 1, m)]);
        let dec = and([not(en), lv, congruent(usr, 0, m)]);
        cs.assert(
            Tag::Constraint("L1,3"),
            implies(
                inc.clone(),
                and([
                    eq(usg.clone(), add(usg_p.clone(), int(1))),
                    eq(resim.clone(), sub(resi_p.clone(), int(1))),
                ]),
            ),
        );
        cs.assert(
            Tag::Constraint("L1,3"),
            implies(
                dec.clone(),
                and([
                    eq(usg.clone(), sub(usg_p.clone(), int(1))),
                    eq(resim.clone(), add(resi_p.clone(), int(1))),
                ]),
            ),
        );
        cs.assert(
            Tag::Closure,
            implies(
                and([not(inc), not(dec)]),
                and([eq(usg, usg_p), eq(resim.clone(), resi_p)]),
            ),
        );

        let w = config.w_hat(i);
        let top = sv("top", i, j);
        let ramp = sv("ramp", i, j);
        if spec.is_boundary(j) {
            cs.assert(
                Tag::Constraint("L1,4"),
                eq(top.clone(), and([not(ovr.clone()), le(resim.clone(), int(w))])),
            );
            cs.assert(
                Tag::Constraint("L1,5"),
                eq(
                    ramp.clone(),
                    and([ge(resim.clone(), int(2 * w)), eq(ent, int(0))]),
                ),
            );
        } else {
            cs.assert(Tag::Closure, not(top.clone()));
            cs.assert(Tag::Closure, not(ramp.clone()));
            cs.assert(Tag::Frame, eq(sv("shr", i, j), sv("shr", i, p)));
            cs.assert(Tag::Frame, eq(sv("resi", i, j), resim));
        }
        cs.assert(Tag::Constraint("L1,6"), not(and([top, ramp])));
    }

    // partition adjustment: one implication per signal combination
    let mut active = Vec::new();
    for (k, members) in partitions.iter().enumerate() {
        let pt = var(names::pt(k + 1, j));
        let pt_p = var(names::pt(k + 1, p));
        let boundary: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| config.slices[i].is_boundary(j))
            .collect();
        if boundary.is_empty() {
            cs.assert(Tag::Frame, eq(pt, pt_p));
            continue;
        }
        active.push(k);
        for combo in combinations(boundary.len()) {
            let mut guard = Vec::new();
            let mut body = Vec::new();
            let mut net = 0;
            for (&i, &case) in boundary.iter().zip(&combo) {
                let top = sv("top", i, j);
                let ramp = sv("ramp", i, j);
                let w = config.w_hat(i);
                let (g, delta) = match case {
                    Case::Top => (and([top, not(ramp)]), w),
                    Case::Ramp => (and([not(top), ramp]), -w),
                    Case::Hold => (and([not(top), not(ramp)]), 0),
                };
                guard.push(g);
                net += delta;
                body.push(eq(
                    sv("shr", i, j),
                    add(sv("shr", i, p), int(delta)),
                ));
                body.push(eq(
                    sv("resi", i, j),
                    add(sv("resim", i, j), int(delta)),
                ));
            }
            body.push(eq(pt.clone(), add(pt_p.clone(), int(net))));
            cs.assert(Tag::Constraint("L2"), implies(and(guard), and(body)));
        }
    }

    // residual adjustment across partitions that may have moved
    let rp = var(names::rp(j));
    let rp_p = var(names::rp(p));
    if active.is_empty() {
        cs.assert(Tag::Frame, eq(rp, rp_p));
        return;
    }
    for combo in combinations(active.len()) {
        let mut guard = Vec::new();
        let mut zeta1 = Vec::new();
        let mut zeta2 = Vec::new();
        for (&k, &case) in active.iter().zip(&combo) {
            let pt = var(names::pt(k + 1, j));
            let pt_p = var(names::pt(k + 1, p));
            match case {
                Case::Top => {
                    guard.push(lt(pt_p.clone(), pt.clone()));
                    zeta1.push(sub(pt, pt_p));
                }
                Case::Ramp => {
                    guard.push(lt(pt.clone(), pt_p.clone()));
                    zeta2.push(sub(pt_p, pt));
                }
                Case::Hold => guard.push(eq(pt, pt_p)),
            }
        }
        let next = add_terms(sub_terms(rp_p.clone(), zeta1), zeta2);
        cs.assert(Tag::Constraint("L3,1"), implies(and(guard), eq(rp.clone(), next)));
    }
}

fn sub_terms(base: Term, terms: Vec<Term>) -> Term {
    if terms.is_empty() {
        base
    } else {
        sub(base, sum(terms))
    }
}

fn add_terms(base: Term, terms: Vec<Term>) -> Term {
    if terms.is_empty() {
        base
    } else {
        term::add(base, sum(terms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Case {
    Hold,
    Top,
    Ramp,
}

/// All `3^n` assignments of a case to `n` items, in lexicographic order.
fn combinations(n: usize) -> Vec<Vec<Case>> {
    let mut out = vec![Vec::with_capacity(n)];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                [Case::Hold, Case::Top, Case::Ramp].map(|c| {
                    let mut v = prefix.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::constraint_count_bound;
    use crate::presets;
    use crate::scenario::gen_from_profile;

    #[test]
    fn combinations_cover_all_cases() {
        assert_eq!(combinations(0), vec![Vec::<Case>::new()]);
        assert_eq!(combinations(2).len(), 9);
        let c3 = combinations(3);
        assert_eq!(c3.len(), 27);
        let mut dedup = c3.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 27);
    }

    #[test]
    fn zero_horizon_has_only_initial_assertions() {
        let cfg = presets::load("3-2-4").unwrap().with_overrides(None, Some(0));
        let cs = encode(&cfg, &ScenarioTrace::empty(&cfg)).unwrap();
        assert!(cs.assertions.iter().all(|a| a.tag == Tag::Initial));
        assert_eq!(cs.assertion_count(), 0);
        // five per slice, one per partition, residual and overuse flag
        assert_eq!(cs.assertions.len(), 5 * 4 + 2 + 2);
    }

    #[test]
    fn declarations_are_consistent_and_bound_holds() {
        for name in presets::NAMES {
            let cfg = presets::load(name).unwrap();
            let s = gen_from_profile(&cfg, 1).unwrap();
            let cs = encode(&cfg, &s).unwrap();
            cs.check_declarations().unwrap();
            let bound = constraint_count_bound(&cfg).unwrap();
            assert!(
                cs.assertion_count() as u64 <= COUNT_CONSTANT * bound,
                "{name}: {} > {COUNT_CONSTANT} * {bound}",
                cs.assertion_count()
            );
        }
    }

    #[test]
    fn rejects_infeasible_config() {
        let cfg = presets::load("5-4-13").unwrap().with_overrides(Some(100), None);
        let s = ScenarioTrace::empty(&cfg);
        assert!(matches!(encode(&cfg, &s), Err(EncodeError::Config(_))));
    }

    #[test]
    fn rejects_misshapen_scenario() {
        let cfg = presets::load("3-2-4").unwrap();
        let mut s = ScenarioTrace::empty(&cfg);
        s.arrivals.pop();
        assert!(matches!(encode(&cfg, &s), Err(EncodeError::Scenario(_))));
    }

    #[test]
    fn every_assertion_is_tagged_with_a_known_name() {
        let cfg = presets::load("3-3-7").unwrap();
        let cs = encode(&cfg, &gen_from_profile(&cfg, 2).unwrap()).unwrap();
        let known = [
            "L1,1", "L1,2", "L1,3", "L1,4", "L1,5", "L1,6", "L2", "L3,1", "L3,2", "L3,4",
            "closure", "frame", "initial", "scenario",
        ];
        for tag in cs.count_by_tag().keys() {
            assert!(known.contains(&tag.as_str()), "{tag}");
        }
    }
}
