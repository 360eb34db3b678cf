//! Temporal formulas in a parenthesised prefix syntax.
//!
//! ```text
//! formula := true | false | NAME
//!          | (not F) | (and F F ...) | (or F F ...)
//!          | (until F F) | (eventually F) | (always F)
//! ```
//!
//! `eventually` and `always` are kept as written; `or` and `false` are
//! sugar for their negated duals.

use std::collections::BTreeMap;
use std::fmt;

use super::AutomataError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    True,
    Atom(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        Formula::Atom(name.to_string())
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn always(f: Formula) -> Self {
        Formula::Always(Box::new(f))
    }

    pub fn parse(text: &str) -> Result<Self, AutomataError> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let f = parse_expr(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(AutomataError::Parse(format!("trailing input after token {pos}")));
        }
        Ok(f)
    }

    /// Atom names in order of first appearance (depth-first, left to right).
    pub fn atoms(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |f| {
            if let Formula::Atom(a) = f {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Formula)) {
        f(self);
        match self {
            Formula::True | Formula::Atom(_) => {}
            Formula::Not(a) | Formula::Eventually(a) | Formula::Always(a) => a.visit(f),
            Formula::And(items) => items.iter().for_each(|c| c.visit(f)),
            Formula::Until(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Same tree with every atom renamed.
    pub fn map_atoms(&self, rename: &impl Fn(&str) -> String) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::Atom(a) => Formula::Atom(rename(a)),
            Formula::Not(a) => Formula::not(a.map_atoms(rename)),
            Formula::Eventually(a) => Formula::eventually(a.map_atoms(rename)),
            Formula::Always(a) => Formula::always(a.map_atoms(rename)),
            Formula::And(items) => Formula::And(items.iter().map(|c| c.map_atoms(rename)).collect()),
            Formula::Until(a, b) => Formula::Until(Box::new(a.map_atoms(rename)), Box::new(b.map_atoms(rename))),
        }
    }

    /// Count of each operator, atoms counted together.
    pub fn operator_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        self.visit(&mut |f| {
            let key = match f {
                Formula::True => "true",
                Formula::Atom(_) => "atom",
                Formula::Not(_) => "not",
                Formula::And(_) => "and",
                Formula::Until(..) => "until",
                Formula::Eventually(_) => "eventually",
                Formula::Always(_) => "always",
            };
            *out.entry(key).or_insert(0) += 1;
        });
        out
    }

    pub fn node_count(&self) -> usize {
        self.operator_counts().values().sum()
    }

    /// Rewrites `eventually` and `always` into `until` and negation.
    pub fn desugar(&self) -> Formula {
        match self {
            Formula::True | Formula::Atom(_) => self.clone(),
            Formula::Not(a) => Formula::not(a.desugar()),
            Formula::And(items) => Formula::And(items.iter().map(Formula::desugar).collect()),
            Formula::Until(a, b) => Formula::Until(Box::new(a.desugar()), Box::new(b.desugar())),
            Formula::Eventually(a) => Formula::Until(Box::new(Formula::True), Box::new(a.desugar())),
            Formula::Always(a) => Formula::not(Formula::Until(
                Box::new(Formula::True),
                Box::new(Formula::not(a.desugar())),
            )),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(a) => write!(f, "(not {a})"),
            Formula::Eventually(a) => write!(f, "(eventually {a})"),
            Formula::Always(a) => write!(f, "(always {a})"),
            Formula::Until(a, b) => write!(f, "(until {a} {b})"),
            Formula::And(items) => {
                write!(f, "(and")?;
                for c in items {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect()
}

fn parse_expr(tokens: &[String], pos: &mut usize) -> Result<Formula, AutomataError> {
    let tok = tokens.get(*pos).ok_or_else(|| AutomataError::Parse("unexpected end of formula".into()))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {}
        ")" => return Err(AutomataError::Parse("unexpected ')'".into())),
        "true" => return Ok(Formula::True),
        "false" => return Ok(Formula::not(Formula::True)),
        name => {
            if !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.') {
                return Err(AutomataError::Parse(format!("invalid name `{name}`")));
            }
            return Ok(Formula::Atom(name.to_string()));
        }
    }
    let op = tokens.get(*pos).ok_or_else(|| AutomataError::Parse("missing operator".into()))?.clone();
    *pos += 1;
    let mut args = Vec::new();
    while tokens.get(*pos).map(String::as_str) != Some(")") {
        if *pos >= tokens.len() {
            return Err(AutomataError::Parse("unbalanced parentheses".into()));
        }
        args.push(parse_expr(tokens, pos)?);
    }
    *pos += 1;
    let arity = |n: usize| -> Result<(), AutomataError> {
        if args.len() == n {
            Ok(())
        } else {
            Err(AutomataError::Parse(format!("`{op}` takes {n} argument(s), got {}", args.len())))
        }
    };
    Ok(match op.as_str() {
        "not" => {
            arity(1)?;
            Formula::not(args.remove(0))
        }
        "eventually" => {
            arity(1)?;
            Formula::eventually(args.remove(0))
        }
        "always" => {
            arity(1)?;
            Formula::always(args.remove(0))
        }
        "until" => {
            arity(2)?;
            let b = args.pop().expect("two args");
            let a = args.pop().expect("two args");
            Formula::Until(Box::new(a), Box::new(b))
        }
        "and" | "or" if args.len() < 2 => {
            return Err(AutomataError::Parse(format!("`{op}` needs at least two arguments")));
        }
        "and" => Formula::And(args),
        "or" => Formula::not(Formula::And(args.into_iter().map(Formula::not).collect())),
        other => return Err(AutomataError::Parse(format!("unknown operator `{other}`"))),
    })
}

/// Bijection between predicate names and fresh proposition names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropositionMap {
    /// `(predicate, proposition)` in proposition order.
    pairs: Vec<(String, String)>,
}

impl PropositionMap {
    /// Explicit `(predicate, proposition)` bindings; both sides must be
    /// distinct.
    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self, AutomataError> {
        for (i, (l, p)) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|(l2, p2)| l2 == l || p2 == p) {
                return Err(AutomataError::Schema(format!("binding `{p}` -> `{l}` is not one-to-one")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn propositions(&self) -> Vec<&str> {
        self.pairs.iter().map(|(_, p)| p.as_str()).collect()
    }

    pub fn predicates(&self) -> Vec<&str> {
        self.pairs.iter().map(|(l, _)| l.as_str()).collect()
    }

    pub fn proposition_of(&self, predicate: &str) -> Option<&str> {
        self.pairs.iter().find(|(l, _)| l == predicate).map(|(_, p)| p.as_str())
    }

    pub fn predicate_of(&self, proposition: &str) -> Option<&str> {
        self.pairs.iter().find(|(_, p)| p == proposition).map(|(l, _)| l.as_str())
    }
}

/// Replaces each predicate with a fresh proposition `pi1, pi2, ...`
/// numbered by first appearance.
pub fn to_ltl(formula: &Formula) -> (Formula, PropositionMap) {
    let pairs: Vec<(String, String)> =
        formula.atoms().into_iter().enumerate().map(|(i, l)| (l, format!("pi{}", i + 1))).collect();
    let map = PropositionMap { pairs };
    let ltl = formula.map_atoms(&|l| map.proposition_of(l).expect("every atom is mapped").to_string());
    (ltl, map)
}

/// Goal order and safety literals of a formula in the sequencing fragment
/// `(and (eventually (and g1 (eventually (and g2 ...)))) (always s1) ...)`,
/// where each safety item is a name or a negated name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequencing {
    pub goals: Vec<String>,
    /// `(name, must_hold)`.
    pub safety: Vec<(String, bool)>,
}

pub fn sequencing_fragment(formula: &Formula) -> Result<Sequencing, AutomataError> {
    let outside = || AutomataError::Unsupported(format!("`{formula}` is not a sequencing formula"));
    let conjuncts: Vec<&Formula> = match formula {
        Formula::And(items) => items.iter().collect(),
        other => vec![other],
    };
    let mut goals = Vec::new();
    let mut safety = Vec::new();
    for c in conjuncts {
        match c {
            Formula::Eventually(inner) => {
                if !goals.is_empty() {
                    return Err(outside());
                }
                let mut cur: &Formula = inner;
                loop {
                    match cur {
                        Formula::Atom(a) => {
                            goals.push(a.clone());
                            break;
                        }
                        Formula::And(items) if items.len() == 2 => match (&items[0], &items[1]) {
                            (Formula::Atom(a), Formula::Eventually(next)) => {
                                goals.push(a.clone());
                                cur = next;
                            }
                            _ => return Err(outside()),
                        },
                        _ => return Err(outside()),
                    }
                }
            }
            Formula::Always(inner) => match inner.as_ref() {
                Formula::Atom(a) => safety.push((a.clone(), true)),
                Formula::Not(n) => match n.as_ref() {
                    Formula::Atom(a) => safety.push((a.clone(), false)),
                    _ => return Err(outside()),
                },
                _ => return Err(outside()),
            },
            _ => return Err(outside()),
        }
    }
    if goals.is_empty() {
        return Err(outside());
    }
    Ok(Sequencing { goals, safety })
}
