use std::fmt::Write;

use super::ConstraintSet;

/// Renders `cs` as an SMT-LIB 2 script. Each assertion is preceded by a
/// comment carrying its tag. Output is a pure function of `cs`.
pub fn emit_smtlib(cs: &ConstraintSet) -> String {
    let mut out = String::new();
    for line in &cs.comments {
        writeln!(out, "; {line}").expect("write to string");
    }
    out.push_str("(set-option :produce-models true)\n(set-logic QF_LIA)\n");
    for (name, sort) in &cs.declarations {
        writeln!(out, "(declare-const {name} {sort})").expect("write to string");
    }
    for a in &cs.assertions {
        writeln!(out, "; {}\n(assert {})", a.tag, a.term).expect("write to string");
    }
    out.push_str("(check-sat)\n");
    if !cs.declarations.is_empty() {
        out.push_str("(get-model)\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smt::term::{eq, int, var, Sort};
    use crate::smt::Tag;

    #[test]
    fn empty_set_is_header_and_check() {
        assert_eq!(
            emit_smtlib(&ConstraintSet::default()),
            "(set-option :produce-models true)\n(set-logic QF_LIA)\n(check-sat)\n"
        );
    }

    #[test]
    fn renders_tags_and_model_request() {
        let mut cs = ConstraintSet::default();
        cs.declare("x".into(), Sort::Int);
        cs.assert(Tag::Initial, eq(var("x"), int(-2)));
        assert_eq!(
            emit_smtlib(&cs),
            "(set-option :produce-models true)\n(set-logic QF_LIA)\n(declare-const x Int)\n\
             ; initial\n(assert (= x (- 2)))\n(check-sat)\n(get-model)\n"
        );
    }
}
