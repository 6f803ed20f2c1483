use logicloss::fol::{parse_formula, render, BinaryOp, Formula, UnaryOp};
use proptest::prelude::*;

const TASKS: [&str; 4] = ["queryObj", "verifyAttr", "chooseRel", "existTrue"];

fn vocab() -> Vec<String> {
    TASKS.iter().map(|s| s.to_string()).collect()
}

fn atom() -> impl Strategy<Value = Formula> {
    prop_oneof![
        (0..TASKS.len(), prop::bool::ANY).prop_map(|(t, v)| Formula::task(TASKS[t], if v { "x" } else { "y" })),
        (0..3usize).prop_map(|v| Formula::ans(["x", "y", "z"][v])),
        (0u32..=20).prop_map(|k| Formula::constant(k as f64 / 20.0)),
    ]
}

fn formula() -> impl Strategy<Value = Formula> {
    let binary = prop::sample::select(vec![
        BinaryOp::StrongConj,
        BinaryOp::TConorm,
        BinaryOp::WeakConj,
        BinaryOp::WeakDisj,
        BinaryOp::ResidualImply,
        BinaryOp::MaterialImply,
        BinaryOp::BiResiduum,
    ]);
    let body = atom().prop_recursive(5, 40, 2, move |inner| {
        prop_oneof![
            (binary.clone(), inner.clone(), inner.clone()).prop_map(|(op, l, r)| Formula::binary(op, l, r)),
            (prop::bool::ANY, inner).prop_map(|(strong, f)| Formula::unary(
                if strong { UnaryOp::StrongNeg } else { UnaryOp::ResidualNeg },
                f
            )),
        ]
    });
    (prop::bool::ANY, prop::bool::ANY, body).prop_map(|(all, all_z, b)| {
        let b = if all_z { Formula::forall("z", b) } else { Formula::exists("z", b) };
        let b = Formula::forall("y", b);
        if all {
            Formula::forall("x", b)
        } else {
            Formula::exists("x", b)
        }
    })
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(f in formula()) {
        let text = render(&f);
        let back = parse_formula(&text, &vocab()[..]).unwrap();
        prop_assert_eq!(&back, &f, "rendered as {}", text);
        prop_assert_eq!(render(&back), text);
    }

    #[test]
    fn parser_never_panics(s in "[ -~]{0,60}") {
        let _ = parse_formula(&s, &vocab()[..]);
    }

    #[test]
    fn parser_never_panics_on_near_misses(f in formula(), cut in 0usize..200, junk in "[()~!*&|=<>,:-]{0,3}") {
        let text = render(&f);
        let cut = cut.min(text.len());
        let cut = (0..=cut).rev().find(|&i| text.is_char_boundary(i)).unwrap_or(0);
        let mangled = format!("{}{}{}", &text[..cut], junk, &text[cut..]);
        let _ = parse_formula(&mangled, &vocab()[..]);
    }
}

#[test]
fn unknown_task_is_rejected() {
    assert!(parse_formula("forall x: notATask(x)", &vocab()[..]).is_err());
}
