//! Built-in membrane laws, their certificates and the `f + δ s` shift.

use tissue::nonlinearity::{
    fit_growth_constants, make_nonlinearity, regularize, Coefficients, Kind, Nonlinearity, NonlinearitySpec,
};

fn main() -> tissue::Result<()> {
    let mixed = Coefficients { linear: 1.0, tanh: 0.5, sin: -0.5, cubic: 0.1 };
    let laws = [Kind::Linear, Kind::Coercive, Kind::Noncoercive, Kind::Cubic]
        .map(|k| Nonlinearity::builtin(k, 1.0))
        .into_iter()
        .chain([make_nonlinearity(&NonlinearitySpec::combination(mixed))]);
    for f in laws {
        let f = f?;
        let c = f.certificate();
        let (l1, l2) = fit_growth_constants(&f, 20.0)?;
        println!(
            "{:<12} f(1) = {:>8.4}  inf f' = {:<10}  λ1 = {l1:.3}, λ2 = {l2:.3}",
            f.kind().name(),
            f.eval(1.0),
            c.coercive.map_or("none".to_string(), |k| format!("{k:.3}")),
        );
    }

    let f = Nonlinearity::builtin(Kind::Noncoercive, 1.0)?;
    for delta in [0.1, 0.01, 0.001] {
        let g = regularize(&f, delta)?;
        println!("δ = {delta}: f_δ(π) = {:.6}, inf f_δ' = {:?}", g.eval(std::f64::consts::PI), g.certificate().coercive);
    }

    // The zero function is not strictly increasing and is refused.
    let zero = Coefficients { linear: 0.0, tanh: 0.0, sin: 0.0, cubic: 0.0 };
    if let Err(e) = make_nonlinearity(&NonlinearitySpec::combination(zero)) {
        println!("rejected: {e}");
    }
    Ok(())
}
