//! Just enough of an S-expression reader for solver output.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    /// A `"..."` literal, quotes removed.
    Str(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items) => Some(items),
            _ => None,
        }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(a) => f.write_str(a),
            Sexp::Str(s) => write!(f, "{s:?}"),
            Sexp::List(items) => {
                f.write_str("(")?;
                for (n, item) in items.iter().enumerate() {
                    if n > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Parses every top-level expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    while pos < chars.len() {
        let c = chars[pos];
        match c {
            c if c.is_whitespace() => pos += 1,
            ';' => {
                while pos < chars.len() && chars[pos] != '\n' {
                    pos += 1;
                }
            }
            '(' => {
                stack.push(Vec::new());
                pos += 1;
            }
            ')' => {
                if stack.len() == 1 {
                    return Err(format!("unbalanced ')' at offset {pos}"));
                }
                let done = stack.pop().expect("checked depth");
                stack.last_mut().expect("root frame").push(Sexp::List(done));
                pos += 1;
            }
            '"' => {
                let mut s = String::new();
                pos += 1;
                loop {
                    match chars.get(pos) {
                        None => return Err("unterminated string literal".into()),
                        // SMT-LIB escapes a quote by doubling it
                        Some('"') if chars.get(pos + 1) == Some(&'"') => {
                            s.push('"');
                            pos += 2;
                        }
                        Some('"') => {
                            pos += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            pos += 1;
                        }
                    }
                }
                stack.last_mut().expect("root frame").push(Sexp::Str(s));
            }
            '|' => {
                let start = pos + 1;
                let end = chars[start..]
                    .iter()
                    .position(|&ch| ch == '|')
                    .ok_or("unterminated quoted symbol")?;
                let sym: String = chars[start..start + end].iter().collect();
                stack.last_mut().expect("root frame").push(Sexp::Atom(sym));
                pos = start + end + 1;
            }
            _ => {
                let start = pos;
                while pos < chars.len()
                    && !chars[pos].is_whitespace()
                    && !matches!(chars[pos], '(' | ')' | '"' | ';')
                {
                    pos += 1;
                }
                let atom: String = chars[start..pos].iter().collect();
                stack.last_mut().expect("root frame").push(Sexp::Atom(atom));
            }
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced '(' at end of input".into());
    }
    Ok(stack.pop().expect("root frame"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_models_from_both_layouts() {
        let z3 = "sat\n(\n  (define-fun x () Int\n    (- 3))\n  (define-fun b () Bool\n    true)\n)\n";
        let items = parse_all(z3).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0], Sexp::Atom("sat".into()));
        assert_eq!(items[1].to_string(), "((define-fun x () Int (- 3)) (define-fun b () Bool true))");
        let cvc5 = "sat\n(\n(define-fun x () Int (- 3))\n(define-fun b () Bool true)\n)\n";
        assert_eq!(parse_all(cvc5).unwrap(), items);
    }

    #[test]
    fn strings_symbols_and_comments() {
        let items = parse_all("(error \"line 3: \"\"x\"\"\") ; note\n|odd name|").unwrap();
        assert_eq!(
            items,
            vec![
                Sexp::List(vec![Sexp::Atom("error".into()), Sexp::Str("line 3: \"x\"".into())]),
                Sexp::Atom("odd name".into()),
            ]
        );
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(parse_all("(a (b)").is_err());
        assert!(parse_all("a)").is_err());
        assert!(parse_all("\"open").is_err());
    }
}
