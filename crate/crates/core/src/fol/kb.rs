use std::collections::HashSet;

use super::{parse_formula, render, FolError, Formula, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub formula: Formula,
    pub weight: f64,
}

/// Ordered, uniquely named collection of weighted rules.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeBase {
    rules: Vec<Rule>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, rule: Rule) -> Result<(), FolError> {
        if self.rules.iter().any(|r| r.name == rule.name) {
            return Err(FolError::DuplicateRuleName(rule.name));
        }
        if !rule.weight.is_finite() || rule.weight < 0.0 {
            return Err(FolError::InvalidWeight {
                name: rule.name,
                line: 0,
                weight: rule.weight.to_string(),
            });
        }
        self.rules.push(rule);
        Ok(())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn get(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Text in rule-file format; parses back to an equal knowledge base.
    pub fn to_rules_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&format!("rule \"{}\"", r.name));
            if r.weight != 1.0 {
                out.push_str(&format!(" weight {}", r.weight));
            }
            out.push_str(": ");
            out.push_str(&render(&r.formula));
            out.push('\n');
        }
        out
    }
}

/// Parse a rule file: one `rule "<name>" [weight <w>]: <formula>` per line,
/// `#` starts a comment, blank lines are ignored.
pub fn parse_kb<V: Vocabulary + ?Sized>(text: &str, vocab: &V) -> Result<KnowledgeBase, FolError> {
    let mut kb = KnowledgeBase::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let malformed = || FolError::MalformedRule { line: line_no };
        let rest = line.strip_prefix("rule").ok_or_else(malformed)?.trim_start();
        let rest = rest.strip_prefix('"').ok_or_else(malformed)?;
        let close = rest.find('"').ok_or_else(malformed)?;
        let name = &rest[..close];
        if name.is_empty() {
            return Err(malformed());
        }
        let rest = rest[close + 1..].trim_start();
        let (weight, rest) = match rest.strip_prefix("weight") {
            Some(w) => {
                let w = w.trim_start();
                let end = w.find(':').ok_or_else(malformed)?;
                let text = w[..end].trim();
                let value: f64 = text.parse().map_err(|_| FolError::InvalidWeight {
                    name: name.to_string(),
                    line: line_no,
                    weight: text.to_string(),
                })?;
                if !value.is_finite() || value < 0.0 {
                    return Err(FolError::InvalidWeight {
                        name: name.to_string(),
                        line: line_no,
                        weight: text.to_string(),
                    });
                }
                (value, &w[end..])
            }
            None => (1.0, rest),
        };
        let body = rest.strip_prefix(':').ok_or_else(malformed)?;
        if !seen.insert(name.to_string()) {
            return Err(FolError::DuplicateRuleName(name.to_string()));
        }
        let formula = parse_formula(body, vocab).map_err(|e| FolError::InRule {
            name: name.to_string(),
            line: line_no,
            source: Box::new(e),
        })?;
        kb.rules.push(Rule {
            name: name.to_string(),
            formula,
            weight,
        });
    }
    Ok(kb)
}

// `#` outside the quoted rule name starts a comment.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    const VOCAB: [&str; 3] = ["queryObj", "queryAttrObj", "existAttrTrue"];

    #[test]
    fn parses_rules_in_order_with_default_weight() {
        let text = "# header\n\
                    rule \"a\": forall x1 forall x2: queryObj(x1) => queryAttrObj(x2)\n\
                    \n\
                    rule \"b#1\" weight 0.5: forall x: ans(x)  # trailing\n";
        let kb = parse_kb(text, &VOCAB[..]).unwrap();
        assert_eq!(kb.len(), 2);
        assert_eq!(kb.rules()[0].name, "a");
        assert_eq!(kb.rules()[0].weight, 1.0);
        assert_eq!(kb.rules()[1].name, "b#1");
        assert_eq!(kb.rules()[1].weight, 0.5);
        assert_eq!(parse_kb(&kb.to_rules_text(), &VOCAB[..]).unwrap(), kb);
    }

    #[test]
    fn empty_file() {
        assert!(parse_kb("", &VOCAB[..]).unwrap().is_empty());
        assert!(parse_kb("# only comments\n\n", &VOCAB[..]).unwrap().is_empty());
    }

    #[test]
    fn duplicate_names() {
        let text = "rule \"a\": forall x: ans(x)\nrule \"a\": forall y: ans(y)\n";
        assert_eq!(parse_kb(text, &VOCAB[..]), Err(FolError::DuplicateRuleName("a".into())));
    }

    #[test]
    fn errors_carry_rule_context() {
        let text = "rule \"ok\": forall x: ans(x)\nrule \"bad\": forall x: nope(x)\n";
        match parse_kb(text, &VOCAB[..]) {
            Err(FolError::InRule { name, line, source }) => {
                assert_eq!(name, "bad");
                assert_eq!(line, 2);
                assert_eq!(*source, FolError::UnknownPredicate("nope".into()));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_kb("rule \"w\" weight -1: forall x: ans(x)", &VOCAB[..]),
            Err(FolError::InvalidWeight { .. })
        ));
        assert!(matches!(
            parse_kb("rul \"w\": forall x: ans(x)", &VOCAB[..]),
            Err(FolError::MalformedRule { line: 1 })
        ));
    }
}
