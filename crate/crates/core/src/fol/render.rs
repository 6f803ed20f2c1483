use super::{Atom, Formula, ANSWER_PREDICATE};

const QUANT_PREC: u8 = 0;
const UNARY_PREC: u8 = 5;
const ATOM_PREC: u8 = 6;

/// Canonical text of a formula, with the minimal parentheses the grammar needs.
///
/// Quantifiers are parenthesized whenever they appear under a connective, since
/// their body would otherwise swallow the rest of the enclosing expression.
pub fn render(f: &Formula) -> String {
    let mut out = String::new();
    write(f, &mut out);
    out
}

fn precedence(f: &Formula) -> u8 {
    match f {
        Formula::Atom(_) => ATOM_PREC,
        Formula::Unary(..) => UNARY_PREC,
        Formula::Binary(op, ..) => op.precedence(),
        Formula::Quant(..) => QUANT_PREC,
    }
}

fn write_child(f: &Formula, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        write(f, out);
        out.push(')');
    } else {
        write(f, out);
    }
}

fn write(f: &Formula, out: &mut String) {
    match f {
        Formula::Atom(Atom::Task { task, var }) => {
            out.push_str(task);
            out.push('(');
            out.push_str(var);
            out.push(')');
        }
        Formula::Atom(Atom::AnswerMatch { var }) => {
            out.push_str(ANSWER_PREDICATE);
            out.push('(');
            out.push_str(var);
            out.push(')');
        }
        Formula::Atom(Atom::Const(v)) => out.push_str(&v.to_string()),
        Formula::Unary(op, inner) => {
            out.push_str(op.token());
            write_child(inner, precedence(inner) < UNARY_PREC, out);
        }
        Formula::Binary(op, l, r) => {
            let p = op.precedence();
            let (lp, rp) = (precedence(l), precedence(r));
            let (l_parens, r_parens) = if op.right_assoc() {
                (lp <= p, rp < p)
            } else {
                (lp < p, rp <= p)
            };
            write_child(l, l_parens, out);
            out.push(' ');
            out.push_str(op.token());
            out.push(' ');
            write_child(r, r_parens, out);
        }
        Formula::Quant(q, var, body) => {
            out.push_str(q.keyword());
            out.push(' ');
            out.push_str(var);
            // collapse directly nested quantifiers into one prefix
            if matches!(**body, Formula::Quant(..)) {
                out.push(' ');
            } else {
                out.push_str(": ");
            }
            write(body, out);
        }
    }
}
