//! Gate-count tables for the circuit layer, shared by the criterion
//! benches and their tests.

use mktorus::activation::act_circuit;
use mktorus::circuits::{compare_quads_with, mk_add, mk_div, mk_enc_word, mk_mul, mk_sub};
use mktorus::{ActKind, Combiner, GateCounter, Result, Session};

/// Gates one activation spends at a given width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationCost {
    pub activation: ActKind,
    pub gates: GateCounter,
    /// Bootstrapped gates relative to `g` under the same combiner.
    pub ratio_to_g: f64,
}

pub const ACTIVATIONS: [ActKind; 3] = [ActKind::G, ActKind::Taylor3, ActKind::Taylor7];

/// Measures each activation circuit once on a clear session at input
/// scale 16.
pub fn activation_costs(l: usize, combiner: Combiner) -> Result<Vec<ActivationCost>> {
    let s = Session::clear();
    let x = mk_enc_word(&s, 0, l)?;
    let mut out = Vec::with_capacity(ACTIVATIONS.len());
    for kind in ACTIVATIONS {
        let scope = s.scope();
        act_circuit(&s, kind, &x, 4, combiner)?;
        out.push(ActivationCost { activation: kind, gates: scope.elapsed(), ratio_to_g: 0.0 });
    }
    let g = out[0].gates.bootstrapped as f64;
    for row in &mut out {
        row.ratio_to_g = row.gates.bootstrapped as f64 / g;
    }
    Ok(out)
}

/// Gate counts of the word operators at width `l`. Division takes a
/// `2l`-bit dividend.
pub fn operator_costs(l: usize) -> Result<Vec<(&'static str, GateCounter)>> {
    let s = Session::clear();
    let a = mk_enc_word(&s, -1, l)?;
    let b = mk_enc_word(&s, 1, l)?;
    let wide = mk_enc_word(&s, -1, 2 * l)?;
    let mut out = Vec::new();
    let mut measure = |name, f: &dyn Fn() -> Result<()>| -> Result<()> {
        let scope = s.scope();
        f()?;
        out.push((name, scope.elapsed()));
        Ok(())
    };
    measure("add", &|| mk_add(&s, &a, &b).map(drop))?;
    measure("sub", &|| mk_sub(&s, &a, &b).map(drop))?;
    measure("mul", &|| mk_mul(&s, &a, &b).map(drop))?;
    measure("div", &|| mk_div(&s, &wide, &b).map(drop))?;
    measure("compare_quads", &|| compare_quads_with(&s, &a, &b, &a, &b, Combiner::Or).map(drop))?;
    Ok(out)
}
