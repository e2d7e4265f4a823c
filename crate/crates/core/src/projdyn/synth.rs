//! Synthesis of projective elements with prescribed dynamics: conjugation
//! into locally contracting position, promotion to very-proximal elements,
//! arena nesting under powers, independent tuples of conjugates, and free
//! families inside prescribed double cosets with recorded word expressions.

use std::ops::RangeInclusive;

use rand::Rng;

use super::cert::{
    basepoint_pingpong_certify, contraction_data, is_very_proximal, local_lipschitz,
    pingpong_certify, sample_in_ball, Arena, Ball, ContractionData, HBall, PingPongOutcome,
    ProximalityCertificate, ProximalityOutcome,
};
use super::field::ValuedField;
use super::linalg::{CartanField, Mat, ProjError};
use super::proj::{
    apply_hyperplane, apply_point, dist_point_hyperplane, hausdorff_dist, proj_dist,
    ProjHyperplane, ProjPoint,
};
use super::Constants;
use crate::words::Word;

/// Conjugate `x` into locally contracting position near the repelling-side
/// fixed point of `g`: the smallest `m` with `y = g^m x g^{-m}` of sampled
/// local Lipschitz constant at most `threshold` on the ball of the given
/// radius around the attracting point of `g^{-1}`.
pub fn make_contracting<F: CartanField, R: Rng>(
    field: &F,
    g: &Mat<F>,
    g_cert: &ProximalityCertificate<F>,
    x: &Mat<F>,
    m_range: RangeInclusive<usize>,
    threshold: f64,
    radius: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(usize, Mat<F>, f64), ProjError> {
    let moved = apply_point(field, x, &g_cert.v_inv);
    if dist_point_hyperplane(field, &moved, &g_cert.h) <= field.tol() {
        return Err(ProjError::DegeneratePosition);
    }
    for m in m_range {
        let gm = g.pow(field, m as i64)?;
        let gminv = gm.inverse(field)?;
        let y = gm.mul(field, x).mul(field, &gminv);
        let lip = local_lipschitz(field, &y, &g_cert.v_inv, radius, samples, rng);
        if lip <= threshold {
            return Ok((m, y, lip));
        }
    }
    Err(ProjError::RangeExhausted)
}

/// Positive words over the helper maps up to the given length, shortest
/// first, each as (index sequence, product matrix).
fn helper_words<F: ValuedField>(
    field: &F,
    helpers: &[Mat<F>],
    n: usize,
    word_bound: usize,
) -> Vec<(Vec<usize>, Mat<F>)> {
    let mut out = vec![(Vec::new(), Mat::identity(field, n))];
    let mut layer = out.clone();
    for _ in 0..word_bound {
        let mut next = Vec::new();
        for (seq, m) in &layer {
            for (i, h) in helpers.iter().enumerate() {
                let mut s = seq.clone();
                s.push(i);
                next.push((s, m.mul(field, h)));
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Promote a locally contracting `y` to a very-proximal element of the form
/// `a = y f1 y^{-1} f2` with `f1`, `f2` positive words in the helpers of
/// length at most `word_bound` (the empty pair means `a = y` itself).
/// Returns the first certified candidate in shortest-word order.
#[allow(clippy::too_many_arguments)]
pub fn make_very_proximal<F: CartanField, R: Rng>(
    field: &F,
    y: &Mat<F>,
    helpers: &[Mat<F>],
    word_bound: usize,
    r: f64,
    eps: f64,
    budget: usize,
    rng: &mut R,
    constants: &Constants,
) -> Result<(Vec<usize>, Vec<usize>, Mat<F>, ProximalityCertificate<F>), ProjError> {
    let words = helper_words(field, helpers, y.n, word_bound);
    let yinv = y.inverse(field)?;
    for (s1, f1) in &words {
        for (s2, f2) in &words {
            let candidate = if s1.is_empty() && s2.is_empty() {
                y.clone()
            } else {
                y.mul(field, f1).mul(field, &yinv).mul(field, f2)
            };
            match is_very_proximal(field, &candidate, r, eps, budget, rng, constants) {
                Ok(ProximalityOutcome::Certified(cert)) => {
                    return Ok((s1.clone(), s2.clone(), candidate, cert))
                }
                Ok(ProximalityOutcome::Falsified { .. }) => continue,
                Err(ProjError::SingularAtPrecision) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Err(ProjError::SearchExhausted)
}

/// A deterministic point on the hyperplane: project `z` onto `ker f` along
/// the coordinate direction where `f` is largest.
fn point_on_hyperplane<F: ValuedField>(
    field: &F,
    h: &ProjHyperplane<F>,
    z: &[F::Elem],
) -> Option<Vec<F::Elem>> {
    let f = &h.functional;
    let w = (0..f.len()).max_by(|&i, &j| field.abs(&f[i]).total_cmp(&field.abs(&f[j])))?;
    let fz = {
        let mut acc = field.zero();
        for (a, b) in f.iter().zip(z) {
            acc = field.add(&acc, &field.mul(a, b));
        }
        acc
    };
    let scale = field.div(&fz, &f[w]);
    let mut out: Vec<F::Elem> = z.to_vec();
    out[w] = field.sub(&out[w], &scale);
    if field.vec_norm(&out) <= field.tol() {
        return None;
    }
    Some(field.normalize_vec(&out))
}

/// Image of a metric ball under a projective map, as a covering ball: exact
/// center image plus a sampled radius with a safety factor.
pub fn transport_ball<F: ValuedField, R: Rng>(
    field: &F,
    m: &Mat<F>,
    ball: &Ball<F>,
    samples: usize,
    rng: &mut R,
) -> Ball<F> {
    let center = apply_point(field, m, &ball.center);
    let mut radius = 0.0f64;
    for _ in 0..samples {
        let x = sample_in_ball(field, &ball.center, ball.radius, rng);
        radius = radius.max(proj_dist(field, &apply_point(field, m, &x), &center));
    }
    Ball { center, radius: (radius * 1.25).max(field.tol()) }
}

/// Image of a hyperplane neighborhood, as a covering neighborhood of the
/// image hyperplane with sampled radius.
pub fn transport_hball<F: ValuedField, R: Rng>(
    field: &F,
    m: &Mat<F>,
    hball: &HBall<F>,
    samples: usize,
    rng: &mut R,
) -> Result<HBall<F>, ProjError> {
    let center = apply_hyperplane(field, m, &hball.center)?;
    let mut radius = 0.0f64;
    let mut done = 0;
    while done < samples {
        let z = field.sample_vec(m.n, rng);
        let Some(base) = point_on_hyperplane(field, &hball.center, &z) else {
            continue;
        };
        let pert = field.sample_perturbation(hball.radius, m.n, rng);
        let coords: Vec<F::Elem> = base
            .iter()
            .zip(&pert)
            .map(|(a, b)| field.add(a, b))
            .collect();
        if field.vec_norm(&coords) <= field.tol() {
            continue;
        }
        let x = ProjPoint::<F>::new(field, &coords);
        if dist_point_hyperplane(field, &x, &hball.center) > hball.radius {
            continue;
        }
        done += 1;
        let img = apply_point(field, m, &x);
        radius = radius.max(dist_point_hyperplane(field, &img, &center));
    }
    Ok(HBall { center, radius: (radius * 1.25).max(field.tol()) })
}

/// Transport a whole arena by a projective map.
pub fn transport_arena<F: ValuedField, R: Rng>(
    field: &F,
    m: &Mat<F>,
    arena: &Arena<F>,
    samples: usize,
    rng: &mut R,
) -> Result<Arena<F>, ProjError> {
    Ok(Arena {
        attract: transport_ball(field, m, &arena.attract, samples, rng),
        attract_inv: transport_ball(field, m, &arena.attract_inv, samples, rng),
        repel: transport_hball(field, m, &arena.repel, samples, rng)?,
        repel_inv: transport_hball(field, m, &arena.repel_inv, samples, rng)?,
    })
}

/// Nest the arena of `a` inside prescribed neighborhoods of `h`'s canonical
/// data by conjugation: the smallest `l` such that the transported arena of
/// `a' = h^l a h^{-l}` has attracting components inside the ball of
/// `target_radius` around the attracting point of `h` and repelling
/// components inside the `target_radius`-neighborhood of the repelling
/// hyperplane of `h^{-1}`.
#[allow(clippy::too_many_arguments)]
pub fn position_good<F: CartanField, R: Rng>(
    field: &F,
    h: &Mat<F>,
    h_cert: &ProximalityCertificate<F>,
    a: &Mat<F>,
    a_arena: &Arena<F>,
    target_radius: f64,
    l_range: RangeInclusive<usize>,
    samples: usize,
    rng: &mut R,
) -> Result<(usize, Mat<F>, Arena<F>), ProjError> {
    // If an attracting point of `a` sits on the repelling hyperplane of `h`
    // at precision, conjugation never pulls it toward the attracting point.
    for center in [&a_arena.attract.center, &a_arena.attract_inv.center] {
        if dist_point_hyperplane(field, center, &h_cert.h) <= field.tol() {
            return Err(ProjError::DegeneratePosition);
        }
    }
    let target_a = &h_cert.v;
    let target_r = &h_cert.h_inv;
    for l in l_range {
        let hl = h.pow(field, l as i64)?;
        let hlinv = hl.inverse(field)?;
        let conj = hl.mul(field, a).mul(field, &hlinv);
        let moved = transport_arena(field, &hl, a_arena, samples, rng)?;
        let ok_balls = [&moved.attract, &moved.attract_inv].iter().all(|b| {
            proj_dist(field, &b.center, target_a) + b.radius <= target_radius
        });
        let ok_hballs = [&moved.repel, &moved.repel_inv].iter().all(|hb| {
            hausdorff_dist(field, &hb.center, target_r) + hb.radius <= target_radius
        });
        if ok_balls && ok_hballs {
            return Ok((l, conj, moved));
        }
    }
    Err(ProjError::RangeExhausted)
}

/// Certify the conjugated tuple `{g^{i} a_i g^{-i}}`: transports each stored
/// arena by the corresponding power of `g` and runs the full ping-pong
/// disjointness and validity checks. The indices must be pairwise distinct.
pub fn arrange_independent<F: CartanField, R: Rng>(
    field: &F,
    g: &Mat<F>,
    elements: &[(Mat<F>, Arena<F>)],
    indices: &[i64],
    samples: usize,
    budget: usize,
    rng: &mut R,
) -> Result<PingPongOutcome<F>, ProjError> {
    assert_eq!(elements.len(), indices.len());
    for i in 0..indices.len() {
        for j in i + 1..indices.len() {
            if indices[i] == indices[j] {
                return Ok(PingPongOutcome::Overlap {
                    pair: (i, j),
                    description: format!("duplicate conjugation index {}", indices[i]),
                    margin: 0.0,
                });
            }
        }
    }
    let mut tuple = Vec::with_capacity(elements.len());
    for ((a, arena), &i) in elements.iter().zip(indices) {
        let gi = g.pow(field, i)?;
        let giinv = gi.inverse(field)?;
        let conj = gi.mul(field, a).mul(field, &giinv);
        let moved = transport_arena(field, &gi, arena, samples, rng)?;
        tuple.push((conj, moved));
    }
    pingpong_certify(field, &tuple, budget, rng)
}

/// Result of a double-coset synthesis: exponents, the element, its
/// contraction scale and data, and the four recorded containment margins
/// (repelling into `R(b_p)`, attracting into `A(b_q)`, inverse repelling
/// into `R(b_q^{-1})`, inverse attracting into `A(b_p^{-1})`).
#[derive(Clone, Debug)]
pub struct CosetSynthesis<F: ValuedField> {
    pub l1: usize,
    pub l2: usize,
    pub f: Mat<F>,
    pub eps_f: f64,
    pub margins: [f64; 4],
    pub fwd: ContractionData<F>,
    pub bwd: ContractionData<F>,
}

impl<F: ValuedField> CosetSynthesis<F> {
    /// Arena of the synthesized element at its own contraction scale.
    pub fn arena(&self) -> Arena<F> {
        Arena {
            attract: Ball { center: self.fwd.v.clone(), radius: self.eps_f },
            attract_inv: Ball { center: self.bwd.v.clone(), radius: self.eps_f },
            repel: HBall { center: self.fwd.h.clone(), radius: self.eps_f },
            repel_inv: HBall { center: self.bwd.h.clone(), radius: self.eps_f },
        }
    }
}

/// Arena of `f` with sampled tight attracting radii: the repelling
/// neighborhoods get the fixed radius `repel_radius`, and each attracting
/// radius is the observed supremum of image distances over the valid region
/// times a safety factor. Much sharper than the Cartan estimate for highly
/// contracting elements, at the cost of being sampled.
pub fn tight_arena<F: ValuedField, R: Rng>(
    field: &F,
    f: &Mat<F>,
    fwd: &ContractionData<F>,
    bwd: &ContractionData<F>,
    repel_radius: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Arena<F>, ProjError> {
    let finv = f.inverse(field)?;
    let mut radii = [0.0f64; 2];
    for (slot, (map, data)) in [(f, fwd), (&finv, bwd)].into_iter().enumerate() {
        let mut used = 0;
        let mut draws = 0;
        while used < samples && draws < samples * 20 {
            draws += 1;
            let x = ProjPoint::<F> { coords: field.sample_vec(f.n, rng) };
            if dist_point_hyperplane(field, &x, &data.h) < repel_radius {
                continue;
            }
            used += 1;
            let d = proj_dist(field, &apply_point(field, map, &x), &data.v);
            radii[slot] = radii[slot].max(d);
        }
        radii[slot] = (radii[slot] * 4.0).max(field.tol());
    }
    Ok(Arena {
        attract: Ball { center: fwd.v.clone(), radius: radii[0] },
        attract_inv: Ball { center: bwd.v.clone(), radius: radii[1] },
        repel: HBall { center: fwd.h.clone(), radius: repel_radius },
        repel_inv: HBall { center: bwd.h.clone(), radius: repel_radius },
    })
}

/// The four containment margins of a candidate `f` against the arenas of
/// `b_p` and `b_q`. `None` when `f` has no contraction gap in one of the
/// two directions.
pub fn coset_margins<F: CartanField>(
    field: &F,
    f: &Mat<F>,
    bp_cert: &ProximalityCertificate<F>,
    bq_cert: &ProximalityCertificate<F>,
    constants: &Constants,
) -> Result<Option<([f64; 4], f64, ContractionData<F>, ContractionData<F>)>, ProjError> {
    let fwd = match contraction_data(field, f, constants.c) {
        Ok(d) => d,
        Err(ProjError::NotContracting) => return Ok(None),
        Err(e) => return Err(e),
    };
    let finv = match f.inverse(field) {
        Ok(m) => m,
        Err(ProjError::SingularAtPrecision) => return Ok(None),
        Err(e) => return Err(e),
    };
    let bwd = match contraction_data(field, &finv, constants.c) {
        Ok(d) => d,
        Err(ProjError::NotContracting) => return Ok(None),
        Err(e) => return Err(e),
    };
    let eps_f = fwd.eps_est.max(bwd.eps_est);
    let margins = [
        bp_cert.eps - hausdorff_dist(field, &fwd.h, &bp_cert.h) - eps_f,
        bq_cert.eps - proj_dist(field, &fwd.v, &bq_cert.v) - eps_f,
        bq_cert.eps - hausdorff_dist(field, &bwd.h, &bq_cert.h_inv) - eps_f,
        bp_cert.eps - proj_dist(field, &bwd.v, &bp_cert.v_inv) - eps_f,
    ];
    Ok(Some((margins, eps_f, fwd, bwd)))
}

/// Synthesize `f = b_q^{l2} · y·γ·x · b_p^{l1}` with the smallest
/// lexicographic `(l1, l2)` in range such that `f` contracts in both
/// directions and its arena nests into the arenas of `b_p`, `b_q` with all
/// four margins strictly positive.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_coset_element<F: CartanField>(
    field: &F,
    bp: &Mat<F>,
    bp_cert: &ProximalityCertificate<F>,
    bq: &Mat<F>,
    bq_cert: &ProximalityCertificate<F>,
    x: &Mat<F>,
    y: &Mat<F>,
    gamma: &Mat<F>,
    l_range: RangeInclusive<usize>,
    constants: &Constants,
) -> Result<CosetSynthesis<F>, ProjError> {
    let middle = y.mul(field, gamma).mul(field, x);
    let moved = apply_point(field, &middle, &bp_cert.v);
    if dist_point_hyperplane(field, &moved, &bq_cert.h) <= field.tol() {
        return Err(ProjError::DegeneratePosition);
    }
    for l1 in l_range.clone() {
        let right = middle.mul(field, &bp.pow(field, l1 as i64)?);
        for l2 in l_range.clone() {
            let f = bq.pow(field, l2 as i64)?.mul(field, &right);
            let Some((margins, eps_f, fwd, bwd)) =
                coset_margins(field, &f, bp_cert, bq_cert, constants)?
            else {
                continue;
            };
            if margins.iter().all(|&m| m > 0.0) {
                return Ok(CosetSynthesis { l1, l2, f, eps_f, margins, fwd, bwd });
            }
        }
    }
    Err(ProjError::RangeExhausted)
}

/// A subgroup of a matrix-represented free group, given by generator words
/// and a distinguished very-proximal member word.
#[derive(Clone, Debug)]
pub struct CosetGroupSpec {
    pub gens: Vec<Word>,
    pub b: Word,
}

/// A request for one element of `Θ_q · γ · Θ_p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CosetRequest {
    pub p: usize,
    pub q: usize,
    pub gamma: usize,
}

/// One synthesized family member with its recorded word expression.
#[derive(Clone, Debug)]
pub struct FamilyMember<F: ValuedField> {
    pub request: CosetRequest,
    pub synthesis: CosetSynthesis<F>,
    pub word: Word,
}

/// Result of a family synthesis: successful members, failed requests with
/// reasons, and the joint ping-pong outcome over the whole family.
#[derive(Clone, Debug)]
pub struct FreeFamily<F: ValuedField> {
    pub members: Vec<FamilyMember<F>>,
    pub failures: Vec<(CosetRequest, String)>,
    pub outcome: Option<PingPongOutcome<F>>,
}

impl<F: ValuedField> FreeFamily<F> {
    pub fn certified(&self) -> bool {
        matches!(self.outcome, Some(PingPongOutcome::Certified { .. }))
    }
}

/// Evaluate a free-group word under a matrix assignment of the generators.
pub fn eval_word<F: ValuedField>(
    field: &F,
    rho: &[Mat<F>],
    w: &Word,
) -> Result<Mat<F>, ProjError> {
    assert!(!rho.is_empty());
    let n = rho[0].n;
    let mut out = Mat::identity(field, n);
    for &letter in w.letters() {
        let idx = letter.unsigned_abs() as usize - 1;
        let g = if letter > 0 { rho[idx].clone() } else { rho[idx].inverse(field)? };
        out = out.mul(field, &g);
    }
    Ok(out)
}

/// Synthesize one element per requested double coset `Θ_q γ Θ_p`, with
/// `x` the first generator word of `Θ_p` and `y` the first of `Θ_q`, so the
/// recorded word lies in the coset by construction; then certify the whole
/// family by ping-pong, bumping exponents and retrying on overlaps.
#[allow(clippy::too_many_arguments)]
pub fn double_coset_free_family<F: CartanField, R: Rng>(
    field: &F,
    rho: &[Mat<F>],
    groups: &[CosetGroupSpec],
    gammas: &[Word],
    requests: &[CosetRequest],
    r: f64,
    eps: f64,
    l_range: RangeInclusive<usize>,
    budget: usize,
    retries: usize,
    rng: &mut R,
    constants: &Constants,
) -> Result<FreeFamily<F>, ProjError> {
    // Certify every distinguished member first.
    let mut b_mats = Vec::with_capacity(groups.len());
    let mut b_certs: Vec<Option<ProximalityCertificate<F>>> = Vec::with_capacity(groups.len());
    for group in groups {
        let b = eval_word(field, rho, &group.b)?;
        let cert = match is_very_proximal(field, &b, r, eps, budget, rng, constants)? {
            ProximalityOutcome::Certified(c) => Some(c),
            ProximalityOutcome::Falsified { .. } => None,
        };
        b_mats.push(b);
        b_certs.push(cert);
    }

    let mut members: Vec<FamilyMember<F>> = Vec::new();
    let mut failures: Vec<(CosetRequest, String)> = Vec::new();
    for &req in requests {
        let (Some(bp_cert), Some(bq_cert)) = (&b_certs[req.p], &b_certs[req.q]) else {
            failures.push((req, "distinguished member is not very proximal".into()));
            continue;
        };
        let x_word = &groups[req.p].gens[0];
        let y_word = &groups[req.q].gens[0];
        let gamma_word = &gammas[req.gamma];
        let x = eval_word(field, rho, x_word)?;
        let y = eval_word(field, rho, y_word)?;
        let gamma = eval_word(field, rho, gamma_word)?;
        match synthesize_coset_element(
            field,
            &b_mats[req.p],
            bp_cert,
            &b_mats[req.q],
            bq_cert,
            &x,
            &y,
            &gamma,
            l_range.clone(),
            constants,
        ) {
            Ok(synthesis) => {
                let word = groups[req.q]
                    .b
                    .power(synthesis.l2 as i64)
                    .multiply(y_word)
                    .and_then(|w| w.multiply(gamma_word))
                    .and_then(|w| w.multiply(x_word))
                    .and_then(|w| w.multiply(&groups[req.p].b.power(synthesis.l1 as i64)))
                    .expect("word ranks agree");
                members.push(FamilyMember { request: req, synthesis, word });
            }
            Err(e) => failures.push((req, e.to_string())),
        }
    }

    if members.is_empty() {
        return Ok(FreeFamily { members, failures, outcome: None });
    }

    // Joint certification in the basepoint form with power padding: when a
    // member's attracting ball blocks another member's transition, its
    // minimal exponent is raised (shrinking its ball and moving its scale
    // away from the blocked member's critical locus) and the family is
    // re-certified.
    let mut outcome = None;
    let mut floors: Vec<usize> = members.iter().map(|_| *l_range.start()).collect();
    'retry: for _ in 0..=retries {
        let mats: Vec<Mat<F>> = members.iter().map(|m| m.synthesis.f.clone()).collect();
        let result =
            basepoint_pingpong_certify(field, &mats, budget.max(100), rng, constants)?;
        let bumps: Vec<usize> = match &result {
            PingPongOutcome::Overlap { pair: (i, j), .. } => {
                // Pad the source member of the blocked transition.
                vec![if i == j { *i } else { *j }]
            }
            PingPongOutcome::Falsified { element, .. } => vec![*element],
            PingPongOutcome::Certified { .. } => {
                outcome = Some(result);
                break;
            }
        };
        outcome = Some(result);
        for bump in bumps {
            let member = &members[bump];
            let req = member.request;
            let new_floor = member.synthesis.l1.max(floors[bump]) + 1;
            if new_floor > *l_range.end() {
                break 'retry;
            }
            floors[bump] = new_floor;
            let (Some(bp_cert), Some(bq_cert)) = (&b_certs[req.p], &b_certs[req.q]) else {
                break 'retry;
            };
            let x = eval_word(field, rho, &groups[req.p].gens[0])?;
            let y = eval_word(field, rho, &groups[req.q].gens[0])?;
            let gamma = eval_word(field, rho, &gammas[req.gamma])?;
            match synthesize_coset_element(
                field,
                &b_mats[req.p],
                bp_cert,
                &b_mats[req.q],
                bq_cert,
                &x,
                &y,
                &gamma,
                new_floor..=*l_range.end(),
                constants,
            ) {
                Ok(synthesis) => {
                    let word = groups[req.q]
                        .b
                        .power(synthesis.l2 as i64)
                        .multiply(&groups[req.q].gens[0])
                        .and_then(|w| w.multiply(&gammas[req.gamma]))
                        .and_then(|w| w.multiply(&groups[req.p].gens[0]))
                        .and_then(|w| w.multiply(&groups[req.p].b.power(synthesis.l1 as i64)))
                        .expect("word ranks agree");
                    members[bump] = FamilyMember { request: req, synthesis, word };
                }
                Err(e) => {
                    failures.push((req, e.to_string()));
                    break 'retry;
                }
            }
        }
    }
    Ok(FreeFamily { members, failures, outcome })
}
