//! Contraction and proximality certification: Cartan estimates, sampled
//! falsifiers, canonical fixed data via power iteration, ping-pong arenas
//! and their disjointness certificates, and general-position tests.

use rand::Rng;

use super::field::ValuedField;
use super::linalg::{CartanField, Mat, ProjError};
use super::proj::{
    apply_point, dist_point_hyperplane, proj_dist, ProjHyperplane, ProjPoint,
};
use super::Constants;

/// Sorted absolute values of the Cartan components.
pub fn cartan<F: CartanField>(field: &F, g: &Mat<F>) -> Result<Vec<f64>, ProjError> {
    Ok(field.cartan_full(g)?.abs_values)
}

/// Global Lipschitz bound `|a_1 / a_n|^2` for the projective action.
pub fn lipschitz_bound<F: CartanField>(field: &F, g: &Mat<F>) -> Result<f64, ProjError> {
    let a = cartan(field, g)?;
    let ratio = a[0] / a[a.len() - 1];
    Ok(ratio * ratio)
}

/// Cartan-derived contraction estimate: `eps_est = c * sqrt(|a2/a1|)`, the
/// attracting direction and the repelling hyperplane.
#[derive(Clone, Debug)]
pub struct ContractionData<F: ValuedField> {
    pub eps_est: f64,
    pub ratio: f64,
    pub v: ProjPoint<F>,
    pub h: ProjHyperplane<F>,
}

pub fn contraction_data<F: CartanField>(
    field: &F,
    g: &Mat<F>,
    c: f64,
) -> Result<ContractionData<F>, ProjError> {
    let full = field.cartan_full(g)?;
    let a = &full.abs_values;
    if a[1] >= a[0] * (1.0 - field.tol()) {
        return Err(ProjError::NotContracting);
    }
    let ratio = a[1] / a[0];
    Ok(ContractionData {
        eps_est: c * ratio.sqrt(),
        ratio,
        v: ProjPoint::new(field, &full.top_direction),
        h: ProjHyperplane::new(field, &full.dual_functional),
    })
}

/// Result of the sampled contraction falsifier.
#[derive(Clone, Debug)]
pub enum ContractionCheck<F: ValuedField> {
    /// No counterexample in `samples` draws; the largest observed image
    /// distance is recorded.
    NotFalsified { samples: usize, max_image_dist: f64 },
    /// A sampled point far from the repelling hyperplane whose image left
    /// the attracting ball.
    Falsified { witness: ProjPoint<F>, image_dist: f64 },
}

/// Sampling falsifier for `g(P \ (H)_eps) subset (v)_eps`: draws points with
/// `d(x, H) >= eps` and checks `d(gx, v) < eps`.
pub fn is_contracting<F: ValuedField, R: Rng>(
    field: &F,
    g: &Mat<F>,
    eps: f64,
    v: &ProjPoint<F>,
    h: &ProjHyperplane<F>,
    budget: usize,
    rng: &mut R,
) -> ContractionCheck<F> {
    let mut max_image = 0.0f64;
    let mut used = 0;
    let mut draws = 0;
    while used < budget && draws < budget * 20 {
        draws += 1;
        let x = ProjPoint::<F> { coords: field.sample_vec(g.n, rng) };
        if dist_point_hyperplane(field, &x, h) < eps {
            continue;
        }
        used += 1;
        let gx = apply_point(field, g, &x);
        let d = proj_dist(field, &gx, v);
        if d >= eps {
            return ContractionCheck::Falsified { witness: x, image_dist: d };
        }
        max_image = max_image.max(d);
    }
    ContractionCheck::NotFalsified { samples: used, max_image_dist: max_image }
}

/// How a proximality claim was verified.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertMode {
    /// Sound sufficient Cartan bound: `c * sqrt(|a2/a1|) <= eps`.
    Bound,
    /// Sampling falsifier only ("not falsified", not a proof).
    Sampled,
}

/// Certified `(r, eps)`-very-proximal data for a map and its inverse.
#[derive(Clone, Debug)]
pub struct ProximalityCertificate<F: ValuedField> {
    pub r: f64,
    pub eps: f64,
    pub v: ProjPoint<F>,
    pub h: ProjHyperplane<F>,
    pub v_inv: ProjPoint<F>,
    pub h_inv: ProjHyperplane<F>,
    pub mode: CertMode,
    pub both_directions: bool,
    /// `d(v, H)`, `d(v_inv, H_inv)`, `d(v, v_inv)` as computed.
    pub margins: [f64; 3],
    pub max_image_dist: f64,
    pub constants: Constants,
}

/// Outcome of very-proximality certification.
#[derive(Clone, Debug)]
pub enum ProximalityOutcome<F: ValuedField> {
    Certified(ProximalityCertificate<F>),
    Falsified { reason: String, witness: Option<ProjPoint<F>> },
}

/// Certify that `g` is `(r, eps)`-very proximal with canonical data: both
/// contraction directions, the `d(v, H) >= r` conditions, and disjointness
/// of the attracting neighborhoods.
pub fn is_very_proximal<F: CartanField, R: Rng>(
    field: &F,
    g: &Mat<F>,
    r: f64,
    eps: f64,
    budget: usize,
    rng: &mut R,
    constants: &Constants,
) -> Result<ProximalityOutcome<F>, ProjError> {
    assert!(r > 2.0 * eps, "very proximal requires r > 2*eps");
    let fwd = match contraction_data(field, g, constants.c) {
        Ok(d) => d,
        Err(ProjError::NotContracting) => {
            return Ok(ProximalityOutcome::Falsified {
                reason: "no Cartan gap: |a2| = |a1| at working precision".into(),
                witness: None,
            })
        }
        Err(e) => return Err(e),
    };
    let ginv = g.inverse(field)?;
    let bwd = match contraction_data(field, &ginv, constants.c) {
        Ok(d) => d,
        Err(ProjError::NotContracting) => {
            return Ok(ProximalityOutcome::Falsified {
                reason: "inverse has no Cartan gap".into(),
                witness: None,
            })
        }
        Err(e) => return Err(e),
    };
    let d_v_h = dist_point_hyperplane(field, &fwd.v, &fwd.h);
    let d_vi_hi = dist_point_hyperplane(field, &bwd.v, &bwd.h);
    let d_vv = proj_dist(field, &fwd.v, &bwd.v);
    for (name, value, floor) in [
        ("d(v,H) >= r", d_v_h, r),
        ("d(v_inv,H_inv) >= r", d_vi_hi, r),
        ("d(v,v_inv) > 2*eps", d_vv, 2.0 * eps),
    ] {
        if value < floor {
            return Ok(ProximalityOutcome::Falsified {
                reason: format!("{name} fails: {value:.6} < {floor:.6}"),
                witness: None,
            });
        }
    }
    let mut max_image = 0.0f64;
    for (map, data) in [(g, &fwd), (&ginv, &bwd)] {
        match is_contracting(field, map, eps, &data.v, &data.h, budget, rng) {
            ContractionCheck::Falsified { witness, image_dist } => {
                return Ok(ProximalityOutcome::Falsified {
                    reason: format!("sampled image distance {image_dist:.6} >= eps"),
                    witness: Some(witness),
                })
            }
            ContractionCheck::NotFalsified { max_image_dist, .. } => {
                max_image = max_image.max(max_image_dist);
            }
        }
    }
    let mode = if fwd.eps_est <= eps && bwd.eps_est <= eps {
        CertMode::Bound
    } else {
        CertMode::Sampled
    };
    Ok(ProximalityOutcome::Certified(ProximalityCertificate {
        r,
        eps,
        v: fwd.v,
        h: fwd.h,
        v_inv: bwd.v,
        h_inv: bwd.h,
        mode,
        both_directions: true,
        margins: [d_v_h, d_vi_hi, d_vv],
        max_image_dist: max_image,
        constants: *constants,
    }))
}

/// Canonical fixed data by power iteration: the unique attracting fixed
/// point of `g` and the fixed hyperplane from the transpose action.
pub fn canonical_fixed_data<F: CartanField>(
    field: &F,
    g: &Mat<F>,
    tol: f64,
    maxiter: usize,
) -> Result<(ProjPoint<F>, ProjHyperplane<F>), ProjError> {
    let start = field.cartan_full(g)?.top_direction;
    let v = power_iterate(field, g, &start, tol, maxiter)?;
    let gt = g.transpose();
    let dual_start = field.cartan_full(&gt)?.top_direction;
    let f = power_iterate(field, &gt, &dual_start, tol, maxiter)?;
    let vbar = ProjPoint::<F> { coords: v };
    let hbar = ProjHyperplane::<F>::new(field, &f);
    // Residual checks.
    let res_v = proj_dist(field, &apply_point(field, g, &vbar), &vbar);
    let dual_pt = ProjPoint::<F> { coords: hbar.functional.clone() };
    let res_h = proj_dist(field, &apply_point(field, &gt, &dual_pt), &dual_pt);
    if res_v > tol || res_h > tol {
        return Err(ProjError::NoConvergence(maxiter));
    }
    Ok((vbar, hbar))
}

fn power_iterate<F: ValuedField>(
    field: &F,
    g: &Mat<F>,
    start: &[F::Elem],
    tol: f64,
    maxiter: usize,
) -> Result<Vec<F::Elem>, ProjError> {
    let mut x = field.normalize_vec(start);
    for _ in 0..maxiter {
        let next = field.normalize_vec(&g.apply(field, &x));
        let moved = proj_dist(
            field,
            &ProjPoint::<F> { coords: x.clone() },
            &ProjPoint::<F> { coords: next.clone() },
        );
        x = next;
        if moved <= tol {
            return Ok(x);
        }
    }
    Err(ProjError::NoConvergence(maxiter))
}

/// Contraction estimates of the powers `g^n`, `1 <= n <= n_max`.
pub fn powers_decay<F: CartanField>(
    field: &F,
    g: &Mat<F>,
    n_max: usize,
    constants: &Constants,
) -> Result<Vec<f64>, ProjError> {
    let mut out = Vec::with_capacity(n_max);
    let mut p = g.clone();
    for _ in 0..n_max {
        out.push(contraction_data(field, &p, constants.c)?.eps_est);
        p = p.mul(field, g);
    }
    Ok(out)
}

/// Sample a point within projective distance `radius` of `center`.
pub fn sample_in_ball<F: ValuedField, R: Rng>(
    field: &F,
    center: &ProjPoint<F>,
    radius: f64,
    rng: &mut R,
) -> ProjPoint<F> {
    loop {
        let pert = field.sample_perturbation(radius, center.dim(), rng);
        let coords: Vec<F::Elem> = center
            .coords
            .iter()
            .zip(&pert)
            .map(|(c, d)| field.add(c, d))
            .collect();
        if field.vec_norm(&coords) <= field.tol() {
            continue;
        }
        let x = ProjPoint::new(field, &coords);
        if proj_dist(field, &x, center) <= radius {
            return x;
        }
    }
}

/// Largest sampled distortion ratio of `g` within the given ball.
pub fn local_lipschitz<F: ValuedField, R: Rng>(
    field: &F,
    g: &Mat<F>,
    center: &ProjPoint<F>,
    radius: f64,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let mut max_ratio = 0.0f64;
    for _ in 0..samples {
        let x = sample_in_ball(field, center, radius, rng);
        let y = sample_in_ball(field, center, radius, rng);
        let d = proj_dist(field, &x, &y);
        if d <= field.tol() {
            continue;
        }
        let gd = proj_dist(field, &apply_point(field, g, &x), &apply_point(field, g, &y));
        max_ratio = max_ratio.max(gd / d);
    }
    max_ratio
}

/// Closed metric ball around a projective point.
#[derive(Clone, Debug)]
pub struct Ball<F: ValuedField> {
    pub center: ProjPoint<F>,
    pub radius: f64,
}

/// Closed neighborhood of a hyperplane in the point-to-hyperplane distance.
#[derive(Clone, Debug)]
pub struct HBall<F: ValuedField> {
    pub center: ProjHyperplane<F>,
    pub radius: f64,
}

/// Ping-pong arena of one element: attracting balls and repelling
/// hyperplane neighborhoods for the map and its inverse.
#[derive(Clone, Debug)]
pub struct Arena<F: ValuedField> {
    pub attract: Ball<F>,
    pub attract_inv: Ball<F>,
    pub repel: HBall<F>,
    pub repel_inv: HBall<F>,
}

impl<F: ValuedField> Arena<F> {
    /// Arena from a proximality certificate: `eps`-balls around the
    /// canonical points and `eps`-neighborhoods of the hyperplanes.
    pub fn canonical(cert: &ProximalityCertificate<F>) -> Self {
        Arena {
            attract: Ball { center: cert.v.clone(), radius: cert.eps },
            attract_inv: Ball { center: cert.v_inv.clone(), radius: cert.eps },
            repel: HBall { center: cert.h.clone(), radius: cert.eps },
            repel_inv: HBall { center: cert.h_inv.clone(), radius: cert.eps },
        }
    }
}

/// Outcome of ping-pong certification over a tuple of maps with arenas.
#[derive(Clone, Debug)]
pub enum PingPongOutcome<F: ValuedField> {
    /// All disjointness margins positive and no validity counterexample.
    Certified { margins: Vec<(String, f64)> },
    /// Two arena components overlap (conservative ball test failed).
    Overlap { pair: (usize, usize), description: String, margin: f64 },
    /// A sampled point escaped its attracting target.
    Falsified { element: usize, witness: ProjPoint<F> },
}

/// Certify a ping-pong tuple. Exact disjointness: every attracting ball is
/// separated from the attracting balls and repelling neighborhoods of every
/// other element. Same-element requirements depend on the shape of the
/// arena: a one-sided element (distinct attracting sets for the map and its
/// inverse) must keep each attracting ball clear of its own repelling
/// neighborhood, which lets a single sampled validity step iterate to all
/// powers; a two-sided element (shared attracting set, e.g. a unipotent
/// pair with half-space arenas) skips the same-element separations and is
/// instead validity-sampled on powers up to 3. Freeness then follows by
/// the usual syllable induction, so validity remains a sampled falsifier
/// while all disjointness margins are exact.
pub fn pingpong_certify<F: ValuedField, R: Rng>(
    field: &F,
    tuple: &[(Mat<F>, Arena<F>)],
    budget: usize,
    rng: &mut R,
) -> Result<PingPongOutcome<F>, ProjError> {
    let mut margins: Vec<(String, f64)> = Vec::new();
    let two_sided: Vec<bool> = tuple
        .iter()
        .map(|(_, ar)| {
            proj_dist(field, &ar.attract.center, &ar.attract_inv.center) <= field.tol()
        })
        .collect();
    // Same-element separations for one-sided arenas.
    for (i, (_, ar)) in tuple.iter().enumerate() {
        if two_sided[i] {
            continue;
        }
        let checks = [
            (
                format!("A({i}) vs R({i})"),
                field.ball_hyperplane_separation(
                    dist_point_hyperplane(field, &ar.attract.center, &ar.repel.center),
                    ar.attract.radius,
                    ar.repel.radius,
                ),
            ),
            (
                format!("A({i}^-1) vs R({i}^-1)"),
                field.ball_hyperplane_separation(
                    dist_point_hyperplane(field, &ar.attract_inv.center, &ar.repel_inv.center),
                    ar.attract_inv.radius,
                    ar.repel_inv.radius,
                ),
            ),
        ];
        for (desc, margin) in checks {
            if margin <= 0.0 {
                return Ok(PingPongOutcome::Overlap { pair: (i, i), description: desc, margin });
            }
            margins.push((desc, margin));
        }
    }
    // Cross-element: each attracting ball is disjoint from the other
    // element's attracting balls and repelling neighborhoods.
    for (i, (_, ai)) in tuple.iter().enumerate() {
        for (j, (_, aj)) in tuple.iter().enumerate() {
            if i == j {
                continue;
            }
            let a_balls = [("", &ai.attract), ("^-1", &ai.attract_inv)];
            let b_balls = [("", &aj.attract), ("^-1", &aj.attract_inv)];
            let h_balls = [("", &aj.repel), ("^-1", &aj.repel_inv)];
            for (si, bi) in a_balls {
                for (sj, bj) in b_balls.iter() {
                    if i > j {
                        continue; // symmetric pair already recorded
                    }
                    let margin = field.ball_separation(
                        proj_dist(field, &bi.center, &bj.center),
                        bi.radius,
                        bj.radius,
                    );
                    let desc = format!("A({i}{si}) vs A({j}{sj})");
                    if margin <= 0.0 {
                        return Ok(PingPongOutcome::Overlap {
                            pair: (i, j),
                            description: desc,
                            margin,
                        });
                    }
                    margins.push((desc, margin));
                }
                for (sj, hj) in h_balls.iter() {
                    let margin = field.ball_hyperplane_separation(
                        dist_point_hyperplane(field, &bi.center, &hj.center),
                        bi.radius,
                        hj.radius,
                    );
                    let desc = format!("A({i}{si}) vs R({j}{sj})");
                    if margin <= 0.0 {
                        return Ok(PingPongOutcome::Overlap {
                            pair: (i, j),
                            description: desc,
                            margin,
                        });
                    }
                    margins.push((desc, margin));
                }
            }
        }
    }
    // Sampled validity: each power maps the complement of the repelling
    // neighborhood into the attracting ball.
    for (i, (g, ar)) in tuple.iter().enumerate() {
        let ginv = g.inverse(field)?;
        let mut dirs: Vec<(Mat<F>, &HBall<F>, &Ball<F>)> = Vec::new();
        if two_sided[i] {
            for k in 1..=3i64 {
                dirs.push((g.pow(field, k)?, &ar.repel, &ar.attract));
                dirs.push((g.pow(field, -k)?, &ar.repel_inv, &ar.attract_inv));
            }
        } else {
            dirs.push((g.clone(), &ar.repel, &ar.attract));
            dirs.push((ginv.clone(), &ar.repel_inv, &ar.attract_inv));
        }
        for (map, repel, attract) in dirs {
            let mut used = 0;
            let mut draws = 0;
            while used < budget && draws < budget * 20 {
                draws += 1;
                let x = ProjPoint::<F> { coords: field.sample_vec(map.n, rng) };
                if dist_point_hyperplane(field, &x, &repel.center) < repel.radius {
                    continue;
                }
                used += 1;
                let gx = apply_point(field, &map, &x);
                if proj_dist(field, &gx, &attract.center) > attract.radius {
                    return Ok(PingPongOutcome::Falsified { element: i, witness: x });
                }
            }
        }
    }
    Ok(PingPongOutcome::Certified { margins })
}

/// Certify a tuple by the basepoint form of the ping-pong lemma with
/// deterministic transport bounds. Fixed-radius repelling tubes cannot
/// separate a family whose members share padding letters: the inverse
/// attracting point of one member then sits inside any reasonable tube
/// around another member's critical hyperplane. The basepoint form avoids
/// repelling tubes entirely. For each element and sign it keeps one
/// attracting ball, and grows the radii to a fixpoint of
///
/// `r(i,s) = max over sources S:  d(g_i^s c_S, c(i,s)) + L * r_S`,
///
/// where the sources are the attracting balls of the other elements, the
/// ball of `g_i^s` itself (consecutive equal syllables), and the basepoint;
/// `L = c2 * |a2/a1|(g_i^s) / clearance^2` is the Lipschitz bound of the
/// projective action at distance `clearance = d(c_S, H(i,s)) - r_S` from
/// the critical hyperplane. The clearances are exact center/hyperplane
/// distances and must stay positive; the basepoint is verified to lie
/// outside every final ball exactly; transitions are cross-checked by
/// sampling. Any nonempty reduced word then moves the basepoint into an
/// attracting ball that excludes it, so the tuple generates freely.
pub fn basepoint_pingpong_certify<F: CartanField, R: Rng>(
    field: &F,
    tuple: &[Mat<F>],
    samples: usize,
    rng: &mut R,
    constants: &Constants,
) -> Result<PingPongOutcome<F>, ProjError> {
    let m = tuple.len();
    assert!(m > 0);
    let n = tuple[0].n;
    let sign = |s: usize| if s == 0 { "" } else { "^-1" };
    // Canonical data of every map and its inverse.
    let mut maps: Vec<[Mat<F>; 2]> = Vec::with_capacity(m);
    let mut data: Vec<[ContractionData<F>; 2]> = Vec::with_capacity(m);
    for (i, g) in tuple.iter().enumerate() {
        let ginv = g.inverse(field)?;
        let mut pair = Vec::with_capacity(2);
        for dir in [g, &ginv] {
            match contraction_data(field, dir, constants.c) {
                Ok(d) => pair.push(d),
                Err(ProjError::NotContracting) => {
                    return Ok(PingPongOutcome::Overlap {
                        pair: (i, i),
                        description: format!("element {i} has no contraction gap"),
                        margin: 0.0,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        let [fwd, bwd]: [ContractionData<F>; 2] = pair.try_into().unwrap();
        data.push([fwd, bwd]);
        maps.push([g.clone(), ginv]);
    }
    // Basepoint: the sampled candidate farthest from every canonical point
    // and critical hyperplane.
    let mut basepoint: Option<(ProjPoint<F>, f64)> = None;
    for _ in 0..200 {
        let x = ProjPoint::<F> { coords: field.sample_vec(n, rng) };
        let mut score = f64::INFINITY;
        for d2 in &data {
            for d in d2 {
                score = score
                    .min(dist_point_hyperplane(field, &x, &d.h))
                    .min(proj_dist(field, &x, &d.v));
            }
        }
        if basepoint.as_ref().map_or(true, |(_, best)| score > *best) {
            basepoint = Some((x, score));
        }
    }
    let (x0, x0_clearance) = basepoint.expect("candidates were drawn");
    if x0_clearance <= field.tol() {
        return Ok(PingPongOutcome::Overlap {
            pair: (0, 0),
            description: "no basepoint clear of all canonical data".into(),
            margin: x0_clearance,
        });
    }
    // Deterministic radii fixpoint. Sources for target (i, s): attracting
    // balls of every other element, the target's own ball (repeated
    // syllables), and the basepoint as a radius-zero ball.
    let cap = 0.2f64;
    let mut radii = vec![[0.0f64; 2]; m];
    for round in 0..12 {
        let mut next = vec![[0.0f64; 2]; m];
        let mut worst_change = 0.0f64;
        for i in 0..m {
            for s in 0..2 {
                let mut bound = 0.0f64;
                let mut sources: Vec<(&ProjPoint<F>, f64, usize, usize)> = Vec::new();
                for j in 0..m {
                    for t in 0..2 {
                        if j == i && t != s {
                            continue; // g_i^s after g_i^{-s} is not reduced
                        }
                        sources.push((&data[j][t].v, radii[j][t], j, t));
                    }
                }
                sources.push((&x0, 0.0, usize::MAX, 0));
                for (c_src, r_src, j, t) in sources {
                    let clearance =
                        dist_point_hyperplane(field, c_src, &data[i][s].h) - r_src;
                    if clearance <= field.tol() {
                        let desc = if j == usize::MAX {
                            format!("basepoint meets the critical locus of {i}{}", sign(s))
                        } else {
                            format!(
                                "A({j}{}) meets the critical locus of {i}{}",
                                sign(t),
                                sign(s)
                            )
                        };
                        return Ok(PingPongOutcome::Overlap {
                            pair: (i, if j == usize::MAX { i } else { j }),
                            description: desc,
                            margin: clearance,
                        });
                    }
                    let image = apply_point(field, &maps[i][s], c_src);
                    let exact = proj_dist(field, &image, &data[i][s].v);
                    let lip = constants.c2 * data[i][s].ratio / (clearance * clearance);
                    bound = bound.max(exact + lip * r_src);
                }
                next[i][s] = bound;
                worst_change = worst_change.max((bound - radii[i][s]).abs());
            }
        }
        radii = next;
        let blown = radii.iter().flatten().any(|&r| r > cap);
        if blown {
            let (i, s) = (0..m)
                .flat_map(|i| [(i, 0), (i, 1)])
                .max_by(|a, b| radii[a.0][a.1].total_cmp(&radii[b.0][b.1]))
                .unwrap();
            return Ok(PingPongOutcome::Overlap {
                pair: (i, i),
                description: format!(
                    "attracting radius of {i}{} grew past {cap}",
                    sign(s)
                ),
                margin: cap - radii[i][s],
            });
        }
        if round > 0 && worst_change < 1e-3 * cap {
            break;
        }
    }
    // Exact basepoint exclusion from every final ball.
    let mut margins: Vec<(String, f64)> = Vec::new();
    for i in 0..m {
        for s in 0..2 {
            let margin = proj_dist(field, &x0, &data[i][s].v) - radii[i][s];
            let desc = format!("basepoint vs A({i}{})", sign(s));
            if margin <= 0.0 {
                return Ok(PingPongOutcome::Overlap {
                    pair: (i, i),
                    description: desc,
                    margin,
                });
            }
            margins.push((desc, margin));
            margins.push((format!("radius A({i}{})", sign(s)), radii[i][s]));
        }
    }
    margins.push(("basepoint clearance".into(), x0_clearance));
    // Sampled cross-check of every transition against the certified radii.
    let per_pair = (samples / (2 * m).max(1)).max(4);
    for i in 0..m {
        for s in 0..2 {
            let mut check = |center: &ProjPoint<F>, radius: f64| -> Option<ProjPoint<F>> {
                for _ in 0..per_pair {
                    let x = sample_in_ball(field, center, radius.max(field.tol()), rng);
                    let img = apply_point(field, &maps[i][s], &x);
                    if proj_dist(field, &img, &data[i][s].v)
                        > radii[i][s] + field.tol()
                    {
                        return Some(x);
                    }
                }
                None
            };
            for j in 0..m {
                for t in 0..2 {
                    if j == i && t != s {
                        continue;
                    }
                    if let Some(w) = check(&data[j][t].v, radii[j][t]) {
                        return Ok(PingPongOutcome::Falsified { element: i, witness: w });
                    }
                }
            }
            if let Some(w) = check(&x0, 0.0) {
                return Ok(PingPongOutcome::Falsified { element: i, witness: w });
            }
        }
    }
    Ok(PingPongOutcome::Certified { margins })
}

/// Whether every subset of size `<= n` of the given points spans a subspace
/// of its own size (full general position).
pub fn general_position<F: ValuedField>(field: &F, points: &[ProjPoint<F>]) -> bool {
    if points.is_empty() {
        return true;
    }
    let n = points[0].dim();
    let k = n.min(points.len());
    // Dependency of a small subset persists in supersets, so checking all
    // subsets of size k suffices.
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let rows: Vec<Vec<F::Elem>> =
            combo.iter().map(|&i| points[i].coords.clone()).collect();
        if super::linalg::rank_at_precision(field, &rows) < k {
            return false;
        }
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return true;
            }
            i -= 1;
            if combo[i] + 1 <= points.len() - (k - i) {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Whether `g` acts trivially on projective space (scalar at precision).
pub fn projectively_trivial<F: ValuedField>(field: &F, g: &Mat<F>) -> bool {
    g.is_scalar(field)
}

/// Breadth-first orbit search for `n + 1` points in general position.
pub fn orbit_general_position<F: ValuedField>(
    field: &F,
    generators: &[Mat<F>],
    v: &ProjPoint<F>,
    budget: usize,
) -> Result<Option<Vec<ProjPoint<F>>>, ProjError> {
    let n = v.dim();
    let mut maps: Vec<Mat<F>> = Vec::new();
    for g in generators {
        maps.push(g.clone());
        maps.push(g.inverse(field)?);
    }
    let mut orbit: Vec<ProjPoint<F>> = vec![v.clone()];
    let mut frontier = vec![v.clone()];
    while orbit.len() < budget && !frontier.is_empty() {
        let mut next = Vec::new();
        for p in &frontier {
            for m in &maps {
                let q = apply_point(field, m, p);
                if orbit
                    .iter()
                    .all(|o| proj_dist(field, o, &q) > field.tol())
                {
                    orbit.push(q.clone());
                    next.push(q);
                    if orbit.len() >= budget {
                        break;
                    }
                }
            }
        }
        // Search all (n+1)-subsets of the current orbit.
        if orbit.len() >= n + 1 {
            if let Some(found) = find_general_subset(field, &orbit, n + 1) {
                return Ok(Some(found));
            }
        }
        frontier = next;
    }
    Ok(None)
}

fn find_general_subset<F: ValuedField>(
    field: &F,
    points: &[ProjPoint<F>],
    size: usize,
) -> Option<Vec<ProjPoint<F>>> {
    let mut combo: Vec<usize> = (0..size).collect();
    loop {
        let subset: Vec<ProjPoint<F>> = combo.iter().map(|&i| points[i].clone()).collect();
        if general_position(field, &subset) {
            return Some(subset);
        }
        let mut i = size;
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if combo[i] + 1 <= points.len() - (size - i) {
                combo[i] += 1;
                for j in i + 1..size {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Empirically calibrate the contraction constant: the largest observed
/// ratio between sampled image distances and `sqrt(|a2/a1|)` over random
/// 2x2 maps. `c1`, `c2` are set to the same fitted value.
pub fn calibrate<F: CartanField, R: Rng>(
    field: &F,
    samples: usize,
    rng: &mut R,
) -> Result<Constants, ProjError> {
    let mut fitted = 1.0f64;
    for _ in 0..samples {
        let rows: Vec<Vec<F::Elem>> = (0..2).map(|_| field.sample_vec(2, rng)).collect();
        let g = Mat::<F> { n: 2, entries: rows };
        let data = match contraction_data(field, &g, 1.0) {
            Ok(d) => d,
            Err(_) => continue,
        };
        // Observe image distances of points at least sqrt(ratio) away from
        // the repelling hyperplane.
        let floor = data.ratio.sqrt();
        for _ in 0..50 {
            let x = ProjPoint::<F> { coords: field.sample_vec(2, rng) };
            let dh = dist_point_hyperplane(field, &x, &data.h);
            if dh < floor {
                continue;
            }
            let d = proj_dist(field, &apply_point(field, &g, &x), &data.v);
            fitted = fitted.max(d / floor);
        }
    }
    Ok(Constants { c: fitted, c1: fitted, c2: fitted })
}
