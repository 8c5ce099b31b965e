//! Text form of rules: `[id] weight : BODY -> HEAD ^p`.
//!
//! `BODY` is `&`-separated literals, `~` negates, the `[id]` prefix and the
//! `^p` suffix are optional (`p` defaults to 1). Without `->` the line is a
//! prior on the single literal. `#` starts a comment.

use super::{Exponent, Literal, Predicate, PslError, Rule};

pub fn parse_rule(line: &str, line_no: usize, default_id: &str) -> Result<Rule, PslError> {
    let err = |msg: String| PslError::Syntax { line: line_no, msg };
    let mut rest = line.trim();

    let id = if let Some(r) = rest.strip_prefix('[') {
        let (id, after) = r
            .split_once(']')
            .ok_or_else(|| err("unterminated [id]".into()))?;
        let id = id.trim();
        if id.is_empty() {
            return Err(err("empty rule id".into()));
        }
        rest = after.trim_start();
        id.to_string()
    } else {
        default_id.to_string()
    };

    let (weight, rest) = rest
        .split_once(':')
        .ok_or_else(|| err("expected `weight : rule`".into()))?;
    let weight: f64 = weight
        .trim()
        .parse()
        .map_err(|_| err(format!("bad weight {:?}", weight.trim())))?;
    if !(weight.is_finite() && weight >= 0.0) {
        return Err(err(format!("weight must be finite and non-negative, got {weight}")));
    }

    let (logic, exponent) = match rest.rsplit_once('^') {
        Some((logic, p)) => {
            let p: u8 = p
                .trim()
                .parse()
                .map_err(|_| err(format!("bad exponent {:?}", p.trim())))?;
            let p = Exponent::from_value(p).ok_or_else(|| err(format!("exponent must be 1 or 2, got {p}")))?;
            (logic, p)
        }
        None => (rest, Exponent::Linear),
    };

    let (body, head) = match logic.split_once("->") {
        Some((body, head)) => {
            let body = body
                .split('&')
                .map(|l| parse_literal(l, line_no))
                .collect::<Result<Vec<_>, _>>()?;
            (body, parse_literal(head, line_no)?)
        }
        None => (Vec::new(), parse_literal(logic, line_no)?),
    };

    Ok(Rule {
        id,
        weight,
        body,
        head,
        exponent,
    })
}

fn parse_literal(s: &str, line_no: usize) -> Result<Literal, PslError> {
    let err = |msg: String| PslError::Syntax { line: line_no, msg };
    let mut s = s.trim();
    let mut negated = false;
    while let Some(r) = s.strip_prefix('~').or_else(|| s.strip_prefix('!')) {
        negated = !negated;
        s = r.trim_start();
    }
    let (name, args) = s
        .split_once('(')
        .ok_or_else(|| err(format!("expected Predicate(args) in {s:?}")))?;
    let args = args
        .trim_end()
        .strip_suffix(')')
        .ok_or_else(|| err(format!("missing `)` in {s:?}")))?;
    let predicate =
        Predicate::from_name(name.trim()).ok_or_else(|| err(format!("unknown predicate {:?}", name.trim())))?;
    let args: Vec<String> = args.split(',').map(|a| a.trim().to_string()).collect();
    if args.len() != predicate.arity() {
        return Err(err(format!(
            "{} takes {} argument(s), got {}",
            predicate,
            predicate.arity(),
            args.len()
        )));
    }
    for a in &args {
        let ok = a.chars().next().is_some_and(|c| c.is_ascii_uppercase())
            && a.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !ok {
            return Err(err(format!("variable names start with an uppercase letter, got {a:?}")));
        }
    }
    Ok(Literal {
        predicate,
        args,
        negated,
    })
}

/// Parses a rule file; blank lines and `#` comments are skipped. Rules
/// without an explicit id get `rule<N>` with N counting from 1.
pub fn parse_rules(text: &str) -> Result<Vec<Rule>, PslError> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let default_id = format!("rule{}", rules.len() + 1);
        rules.push(parse_rule(line, i + 1, &default_id)?);
    }
    Ok(rules)
}

pub fn write_rules(rules: &[Rule]) -> String {
    let mut out = String::new();
    for r in rules {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_form() {
        let r = parse_rule("1.0 : Upvote(A,B) & Upvote(B,C) -> Upvote(A,C) ^2", 1, "r").unwrap();
        assert_eq!(r.id, "r");
        assert_eq!(r.weight, 1.0);
        assert_eq!(r.body.len(), 2);
        assert_eq!(r.head, Literal::new(Predicate::Upvote, &["A", "C"]));
        assert_eq!(r.exponent, Exponent::Squared);
    }

    #[test]
    fn prior_and_negation() {
        let r = parse_rule("[p] 0.5 : ~Active(A)", 3, "x").unwrap();
        assert_eq!(r.id, "p");
        assert!(r.body.is_empty());
        assert!(r.head.negated);
        assert_eq!(r.exponent, Exponent::Linear);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_rule("Upvote(A,B) -> Upvote(B,A)", 1, "r").is_err());
        assert!(parse_rule("1 : Upvote(A) -> Upvote(A,B)", 1, "r").is_err());
        assert!(parse_rule("1 : Likes(A,B)", 1, "r").is_err());
        assert!(parse_rule("-1 : Upvote(A,B)", 1, "r").is_err());
        assert!(parse_rule("1 : Upvote(A,B) ^3", 1, "r").is_err());
        assert!(parse_rule("1 : Upvote(a,B)", 1, "r").is_err());
    }

    #[test]
    fn file_with_comments() {
        let text = "# header\n\n1 : Upvote(A,B) -> Active(A) ^2  # trailing\n2 : ~Favorable(B)\n";
        let rules = parse_rules(text).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[1].id, "rule2");
    }

    fn arb_literal(vars: &'static [&'static str]) -> impl Strategy<Value = Literal> {
        (0..4usize, any::<bool>(), 0..vars.len(), 0..vars.len()).prop_map(move |(p, neg, a, b)| {
            let predicate = Predicate::ALL[p];
            let args = if predicate.arity() == 2 {
                vec![vars[a].to_string(), vars[b].to_string()]
            } else {
                vec![vars[a].to_string()]
            };
            Literal {
                predicate,
                args,
                negated: neg,
            }
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(
            body in prop::collection::vec(arb_literal(&["A", "B", "C"]), 0..3),
            head in arb_literal(&["A", "B", "C"]),
            weight in 0.0f64..100.0,
            squared in any::<bool>(),
            id in "[a-z][a-z0-9_]{0,8}",
        ) {
            let rule = Rule {
                id,
                weight,
                body,
                head,
                exponent: if squared { Exponent::Squared } else { Exponent::Linear },
            };
            let text = write_rules(std::slice::from_ref(&rule));
            let back = parse_rules(&text).unwrap();
            prop_assert_eq!(back, vec![rule]);
        }
    }
}
