use super::Params;

/// Compare a model's analytic gradients against central finite differences.
///
/// `grads` must already hold the analytic gradient of `loss` (computed by a
/// prior forward/backward pass). `loss` re-evaluates the objective with the
/// model's current parameter values and must be deterministic.
///
/// Returns the maximum relative error over all parameter components, with
/// the denominator floored at 1 so that near-zero components are compared
/// absolutely rather than amplifying finite-difference roundoff.
pub fn max_rel_grad_error<M, F>(model: &mut M, mut loss: F, step: f64) -> f64
where
    M: Params,
    F: FnMut(&mut M) -> f64,
{
    // snapshot analytic grads: (name, flat index) -> value
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.visit_params(&mut |name, _, g| {
        analytic.push((name.to_string(), g.iter().copied().collect()));
    });

    let mut worst = 0.0f64;
    for (pi, (pname, ga)) in analytic.iter().enumerate() {
        for ei in 0..ga.len() {
            let mut bump = |delta: f64, model: &mut M| {
                let mut k = 0;
                model.visit_params(&mut |name, mut v, _| {
                    if k == pi {
                        debug_assert_eq!(name, pname);
                        *v.iter_mut().nth(ei).expect("element index") += delta;
                    }
                    k += 1;
                });
            };
            bump(step, model);
            let lp = loss(model);
            bump(-2.0 * step, model);
            let lm = loss(model);
            bump(step, model);

            let fd = (lp - lm) / (2.0 * step);
            let g = ga[ei];
            let err = (fd - g).abs() / fd.abs().max(g.abs()).max(1.0);
            if err > worst {
                worst = err;
            }
        }
    }
    worst
}
