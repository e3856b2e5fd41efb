//! Exhaustive checks of the array multiplier against integer multiplication
//! and a scalar, cell-by-cell evaluation of the same wiring.

use axm_core::approx::{
    array_multiply, full_add_ama5, full_add_exact, ripple_add, AdderKind, Bit, CellRoles, CellSignal, Word,
};

/// One adder cell on plain booleans.
fn cell(kind: AdderKind, a: bool, b: bool, cin: bool) -> (bool, bool) {
    match kind {
        AdderKind::Exact => (a ^ b ^ cin, (a & b) | (a & cin) | (b & cin)),
        AdderKind::Ama5 => (b, a),
    }
}

fn port(which: CellSignal, pp: bool, sum: bool, carry: bool) -> bool {
    match which {
        CellSignal::PartialProduct => pp,
        CellSignal::Sum => sum,
        CellSignal::Carry => carry,
    }
}

/// Carry-save rows then a ripple merge, every signal a `Vec<bool>` of 2W bits.
fn gate_level(a: u64, b: u64, w: usize, kind: AdderKind, roles: CellRoles) -> u64 {
    let n = 2 * w;
    let row = |i: usize| -> Vec<bool> {
        (0..n)
            .map(|k| k >= i && k - i < w && (a >> (k - i)) & 1 == 1 && (b >> i) & 1 == 1)
            .collect()
    };
    let mut s = row(0);
    let mut c = vec![false; n];
    for i in 1..w {
        let r = row(i);
        let mut ns = vec![false; n];
        let mut nc = vec![false; n];
        for k in 0..n {
            let pick = |sig| port(sig, r[k], s[k], c[k]);
            let (sum, cout) = cell(kind, pick(roles.a()), pick(roles.b()), pick(roles.cin()));
            ns[k] = sum;
            if k + 1 < n {
                nc[k + 1] = cout;
            }
        }
        s = ns;
        c = nc;
    }
    let mut carry = false;
    let mut out = 0u64;
    for k in 0..n {
        let (sum, cout) = cell(kind, s[k], c[k], carry);
        out |= (sum as u64) << k;
        carry = cout;
    }
    out
}

#[test]
fn exact_adders_multiply_for_every_role_map() {
    for w in [4u8, 8] {
        for roles in CellRoles::all() {
            for a in 0..1u64 << w {
                for b in 0..1u64 << w {
                    let p = array_multiply(
                        Word::new(w, a).unwrap(),
                        Word::new(w, b).unwrap(),
                        AdderKind::Exact,
                        roles,
                    )
                    .unwrap();
                    assert_eq!(p.value(), a * b, "{a} x {b}, roles {roles}");
                    assert_eq!(p.width(), 2 * w);
                }
            }
        }
    }
}

#[test]
fn ama5_default_closed_form() {
    for w in [4u8, 8] {
        for a in 0..1u64 << w {
            for b in 0..1u64 << w {
                let got = array_multiply(
                    Word::new(w, a).unwrap(),
                    Word::new(w, b).unwrap(),
                    AdderKind::Ama5,
                    CellRoles::DEFAULT,
                )
                .unwrap()
                .value();
                assert_eq!(got, (a * (b >> (w - 1))) << w, "{a} x {b}");
                assert_eq!(got, gate_level(a, b, w as usize, AdderKind::Ama5, CellRoles::DEFAULT));
            }
        }
    }
}

#[test]
fn bitsliced_matches_gate_level_for_all_roles() {
    for kind in [AdderKind::Exact, AdderKind::Ama5] {
        for roles in CellRoles::all() {
            for w in [4u8, 8] {
                for a in 0..1u64 << w {
                    for b in 0..1u64 << w {
                        let got =
                            array_multiply(Word::new(w, a).unwrap(), Word::new(w, b).unwrap(), kind, roles).unwrap();
                        assert_eq!(
                            got.value(),
                            gate_level(a, b, w as usize, kind, roles),
                            "{kind:?} {roles} {a}x{b}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn full_adder_truth_tables() {
    for bits in 0..8u8 {
        let (a, b, c) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        let (s, co) = full_add_exact(Bit::new(a), Bit::new(b), Bit::new(c));
        assert_eq!((s.is_set(), co.is_set()), cell(AdderKind::Exact, a, b, c));
        let (s, co) = full_add_ama5(Bit::new(a), Bit::new(b), Bit::new(c));
        assert_eq!((s.is_set(), co.is_set()), (b, a));
        let other = full_add_ama5(Bit::new(a), Bit::new(b), Bit::new(!c));
        assert_eq!((s, co), other);
    }
}

#[test]
fn ripple_add_exhaustive_w6() {
    for x in 0..64u64 {
        for y in 0..64u64 {
            let (s, c) = ripple_add(Word::new(6, x).unwrap(), Word::new(6, y).unwrap(), AdderKind::Exact).unwrap();
            assert_eq!(s.value() | (c.as_u64() << 6), x + y);
            let (s, c) = ripple_add(Word::new(6, x).unwrap(), Word::new(6, y).unwrap(), AdderKind::Ama5).unwrap();
            assert_eq!((s.value(), c.as_u64()), (y, x >> 5));
        }
    }
}
