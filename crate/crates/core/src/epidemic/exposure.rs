use super::DiseaseParams;
use crate::error::{Error, Result};
use crate::network::{classify_link, LinkKind, SpdtLink};

/// Inhaled dose (PFU) a neighbour receives over one link.
///
/// The host emits particles at rate `g` into a volume `V` from which they are
/// removed at rate `r`, so the concentration builds up while the host is
/// present and decays after it leaves. The neighbour inhales at rate `p`
/// while present:
///
/// ```text
/// E = gp/(V r²) · [ r(t_i − t_s') + e^{r t_l}(e^{−r t_i} − e^{−r t_l'}) ]
///   + gp/(V r²) · (e^{−r t_l'} − e^{−r t_s'}) e^{r t_s}
/// ```
///
/// with `t_i = t_l'` for direct-only links, `t_l` for mixed links and `t_s'`
/// for indirect-only links. Times are shifted so the host arrives at 0 and
/// the exponentials are regrouped into bounded factors with `exp_m1`, which
/// keeps the evaluation finite and accurate for arbitrary absolute times.
pub fn link_exposure(link: &SpdtLink, removal_rate: f64, params: &DiseaseParams) -> Result<f64> {
    let r = removal_rate;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("removal rate must be positive, got {r}")));
    }
    // A neighbour present before the host arrived is only exposed from the
    // host's arrival on.
    let origin = link.host_start;
    let host_end = (link.host_end - origin) as f64;
    let arrive = (link.nbr_start.max(origin) - origin) as f64;
    let leave = (link.nbr_end.max(link.nbr_start).max(origin) - origin) as f64;

    let pivot = match classify_link(link) {
        LinkKind::DirectOnly => leave,
        LinkKind::Mixed => host_end,
        LinkKind::IndirectOnly => arrive,
    };

    let scale = params.generation_rate * params.pulmonary_rate / (params.volume * r * r);
    let build_up = r * (pivot - arrive);
    // e^{r t_l}(e^{−r t_i} − e^{−r t_l'}) with t_i ≥ t_l whenever the bracket is nonzero
    let after_host = if pivot >= host_end {
        -(-r * (pivot - host_end)).exp() * (-r * (leave - pivot)).exp_m1()
    } else {
        0.0
    };
    // (e^{−r t_l'} − e^{−r t_s'}) e^{r t_s} with t_s = 0
    let before_arrival = (-r * arrive).exp() * (-r * (leave - arrive)).exp_m1();

    let e = scale * (build_up + after_host + before_arrival);
    if !e.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite exposure {e} for link {link:?} at r = {r}"
        )));
    }
    Ok(e.max(0.0))
}

/// Sum of per-link exposures, one removal rate per link.
pub fn total_exposure<'a>(
    links: impl IntoIterator<Item = &'a SpdtLink>,
    removal_rates: impl IntoIterator<Item = f64>,
    params: &DiseaseParams,
) -> Result<f64> {
    links
        .into_iter()
        .zip(removal_rates)
        .try_fold(0.0, |acc, (l, r)| Ok(acc + link_exposure(l, r, params)?))
}

/// Exponential dose-response: `1 − e^{−σE}`.
pub fn infection_probability(exposure: f64, sigma: f64) -> Result<f64> {
    if exposure < 0.0 || exposure.is_nan() {
        return Err(Error::domain(format!("exposure must be >= 0, got {exposure}")));
    }
    if sigma < 0.0 || sigma.is_nan() {
        return Err(Error::domain(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(-(-sigma * exposure).exp_m1())
}

/// Removal rate (1/s) for a removal time given in minutes.
pub fn removal_rate(minutes: f64) -> f64 {
    1.0 / (60.0 * minutes)
}
