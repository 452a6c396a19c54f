use proptest::prelude::*;

use super::*;
use crate::deadline_engine::{run_deadline, DeadlineOptions};
use crate::instance::{DeadlineRequest, Instance, Requests};
use crate::metric::{shapes_overlap, MetricSpace, Shape, WeightedGraph};
use crate::offline_oracle::opt;

fn req(id: u64, point: usize, release: f64, deadline: f64) -> DeadlineRequest {
    DeadlineRequest {
        id,
        point,
        release,
        deadline,
    }
}

fn deadline_trace(inst: &Instance) -> RunTrace {
    RunTrace::Deadline(run_deadline(inst, DeadlineOptions::default()).unwrap())
}

fn lone_request() -> Instance {
    Instance {
        graph: WeightedGraph::new(3, vec![(0, 1, 1.0), (1, 2, 2.0)]),
        server_start: 0,
        requests: Requests::Deadline(vec![req(0, 2, 0.0, 10.0)]),
    }
}

/// Hub 0 with a short spoke to 1 and five spokes of 8; six more spokes of 7
/// hang off 1. Two batches, each overflowing a level-3 tree budget.
fn double_star() -> Instance {
    let mut edges = vec![(0, 1, 1.0)];
    edges.extend((2..7).map(|v| (0, v, 8.0)));
    edges.extend((7..13).map(|v| (1, v, 7.0)));
    let mut reqs: Vec<DeadlineRequest> = (0..6)
        .map(|i| req(i, i as usize + 1, 0.0, i as f64 + 1.0))
        .collect();
    reqs.push(req(6, 0, 7.0, 8.0));
    reqs.extend((7..13).map(|i| req(i, i as usize, 7.0, i as f64 + 2.0)));
    Instance {
        graph: WeightedGraph::new(13, edges),
        server_start: 0,
        requests: Requests::Deadline(reqs),
    }
}

#[test]
fn only_primary_services_certify_nothing() {
    let t = deadline_trace(&lone_request());
    let c = classify(&t);
    assert_eq!(c.primary, vec![0]);
    assert!(c.certified.is_empty());
    assert!(c.certifier.is_empty());
}

#[test]
fn upgraded_trigger_certifies_its_witness() {
    let t = deadline_trace(&double_star());
    let c = classify(&t);
    assert_eq!(t.service_count(), 4);
    assert_eq!(c.primary, vec![0, 2]);
    assert_eq!(c.certifier, BTreeMap::from([(1, 0), (3, 2)]));
    assert_eq!(c.certified, vec![0, 2]);
    assert_eq!(c.witness, BTreeMap::from([(5, 0), (12, 2)]));
    assert!(c.orphans.is_empty());
}

#[test]
fn lone_request_primary_cylinder() {
    let inst = lone_request();
    let m = inst.metric().unwrap();
    let cyl = build_primary_cylinders(&inst, &m, &deadline_trace(&inst), None).unwrap();
    assert_eq!(cyl.len(), 1);
    assert_eq!(
        cyl[0].shape,
        Shape::Ball {
            center: 0,
            radius: 8.0
        }
    );
    assert_eq!((cyl[0].start, cyl[0].end), (Some(0.0), 10.0));
    assert_eq!((cyl[0].level, cyl[0].kind), (5, CylinderKind::Primary));
}

#[test]
fn collocated_request_has_no_cylinders() {
    let inst = Instance {
        requests: Requests::Deadline(vec![req(0, 0, 1.0, 2.0)]),
        ..lone_request()
    };
    let m = inst.metric().unwrap();
    let t = deadline_trace(&inst);
    let c = classify(&t);
    assert!(c.primary.is_empty());
    assert_eq!(c.orphans, vec![0]);
    assert!(build_primary_cylinders(&inst, &m, &t, None)
        .unwrap()
        .is_empty());
    assert!(build_certified_cylinders(&m, &t, &c).is_empty());
}

#[test]
fn certified_interval_starts_at_predecessor_forwarding_time() {
    let inst = double_star();
    let m = inst.metric().unwrap();
    let t = deadline_trace(&inst);
    let cyl = build_certified_cylinders(&m, &t, &classify(&t));
    assert_eq!(cyl.len(), 2);
    assert_eq!((cyl[0].owner, cyl[0].start, cyl[0].end), (0, None, 5.0));
    assert_eq!(
        (cyl[1].owner, cyl[1].start, cyl[1].end),
        (2, Some(5.0), 13.0)
    );
    assert_eq!(
        cyl[1].shape,
        Shape::Ball {
            center: 1,
            radius: 24.0
        }
    );
    assert!(cylinders_disjoint(&m, &cyl[0], &cyl[1]));
}

#[test]
fn double_star_report_passes() {
    let inst = double_star();
    let r = charge_report(&inst, &deadline_trace(&inst), None).unwrap();
    assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    assert_eq!(r.checks_named("certified_once").count(), 2);
    let gaps: Vec<f64> = r
        .checks_named("certification_gap_max")
        .map(|c| c.lhs)
        .collect();
    assert_eq!(gaps, vec![4.0, 4.0]);
}

#[test]
fn lone_request_against_optimum() {
    let inst = lone_request();
    let o = opt(&inst).unwrap();
    let t = deadline_trace(&inst);
    let m = inst.metric().unwrap();
    // The optimum sits on the request at its deadline, so the service is near.
    assert_eq!(o.position_at(10.0), 2);
    assert_eq!(primary_role(&m, &t, 0, Some(&o)), Some(PrimaryRole::Near));
    let r = charge_report(&inst, &t, Some(&o)).unwrap();
    assert!(r.cylinders.is_empty());
    assert!(r.passed());
    assert_eq!(r.opt_movement, Some(3.0));
}

#[test]
fn far_primary_intersection_is_measured() {
    // Triangle 0-1 (8), 0-2 (3), 1-2 (8), server on 1. The optimum walks
    // 1 → 0 at 7.75 and 0 → 2 at 14.75, so at the trigger's deadline 15.5 it
    // stands 3 away from the trigger point 0.
    let inst = Instance {
        graph: WeightedGraph::new(3, vec![(0, 1, 8.0), (0, 2, 3.0), (1, 2, 8.0)]),
        server_start: 1,
        requests: Requests::Deadline(vec![req(0, 2, 14.75, 20.0), req(1, 0, 7.75, 15.5)]),
    };
    let o = opt(&inst).unwrap();
    assert_eq!(o.movement_cost, 11.0);
    let t = deadline_trace(&inst);
    let m = inst.metric().unwrap();
    assert_eq!(primary_role(&m, &t, 0, Some(&o)), Some(PrimaryRole::Far));
    let r = charge_report(&inst, &t, Some(&o)).unwrap();
    assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    assert_eq!(r.cylinders.len(), 1);
    assert_eq!(
        r.cylinders[0].shape,
        Shape::Ball {
            center: 1,
            radius: 16.0
        }
    );
    let c = r.checks_named("far_primary_intersection").next().unwrap();
    assert_eq!((c.lhs, c.rhs), (1.0, 11.0));
    // ρ = 2⁶·3², holes of radius 16/576 at both ends of both traversed edges.
    let c = r.checks_named("far_primary_perforated").next().unwrap();
    assert_eq!(c.lhs, 0.5);
    assert!((c.rhs - (11.0 - 4.0 / 36.0)).abs() < 1e-12);
}

#[test]
fn coinciding_costs_pass() {
    let inst = Instance {
        requests: Requests::Deadline(vec![req(0, 0, 1.0, 2.0)]),
        ..lone_request()
    };
    let o = opt(&inst).unwrap();
    let t = deadline_trace(&inst);
    assert_eq!((t.total_cost(), o.total_cost), (0.0, 0.0));
    assert!(charge_report(&inst, &t, Some(&o)).unwrap().passed());
}

#[test]
fn mode_mismatch_is_rejected() {
    let inst = lone_request();
    let t = deadline_trace(&inst);
    let delay = Instance {
        requests: Requests::Delay(vec![]),
        ..lone_request()
    };
    assert!(matches!(
        charge_report(&delay, &t, None),
        Err(AnalysisError::ModeMismatch { .. })
    ));
}

fn cyl(owner: usize, center: usize, radius: f64, start: f64, end: f64) -> Cylinder {
    Cylinder {
        owner,
        kind: CylinderKind::Primary,
        mode: Mode::Deadline,
        level: 0,
        shape: Shape::Ball { center, radius },
        start: Some(start),
        end,
    }
}

#[test]
fn single_cylinder_partition() {
    let m = lone_request().metric().unwrap();
    let p = perforate_and_partition(&m, &[cyl(0, 0, 4.0, 0.0, 1.0)], 24.0 * 9.0);
    assert_eq!(p.class_count(), 9);
    assert_eq!(p.classes.iter().filter(|c| !c.is_empty()).count(), 1);
    assert!(p.overlapping.is_empty());
}

#[test]
fn level_gap_lands_in_one_class_yet_disjoint() {
    let m = lone_request().metric().unwrap();
    let rho = 8.0;
    // Δ = 4: radii 16 and 1 share class 0 and overlap in time and space.
    let big = cyl(0, 0, 16.0, 0.0, 10.0);
    let small = cyl(1, 1, 1.0, 2.0, 3.0);
    assert!(!cylinders_disjoint(&m, &big, &small));
    let p = perforate_and_partition(&m, &[big, small], rho);
    assert_eq!(p.class_count(), 4);
    assert_eq!(p.classes[0].len(), 2);
    assert!(p.overlapping.is_empty());
    // Without perforation the two still overlap.
    assert!(shapes_overlap(&m, &big.shape, &small.shape) > 0.0);
}

#[test]
fn class_count_for_certified_rho() {
    assert_eq!(
        perforate_and_partition(&lone_request().metric().unwrap(), &[], rho_certified(10))
            .class_count(),
        13
    );
    let n = 1 << 10;
    let delta = crate::tolerance::ceil_log2(rho_certified(n)) + 1;
    assert_eq!(delta, 26);
}

#[test]
fn overlapping_same_level_cylinders_are_reported() {
    let m = lone_request().metric().unwrap();
    let v = level_disjointness(
        &m,
        &[
            cyl(0, 0, 1.0, 0.0, 2.0),
            cyl(1, 1, 1.0, 1.0, 3.0),
            cyl(2, 2, 0.5, 1.0, 3.0),
        ],
    );
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].overlapping, vec![(0, 1)]);
}

fn tree_metric(weights: &[f64], parents: &[usize]) -> MetricSpace {
    let edges = parents
        .iter()
        .enumerate()
        .map(|(i, &p)| (p % (i + 1), i + 1, weights[i]))
        .collect();
    MetricSpace::build(WeightedGraph::new(parents.len() + 1, edges)).unwrap()
}

proptest! {
    /// On trees every edge is a shortest path, so a ball no larger than the
    /// hole radius never meets a perforated ball.
    #[test]
    fn small_ball_misses_perforated_ball(
        weights in prop::collection::vec(0.1f64..10.0, 1..8),
        parents in prop::collection::vec(0usize..8, 8),
        c1 in 0usize..9, c2 in 0usize..9,
        r1 in 0.5f64..200.0, rho in 2.0f64..50.0, shrink in 0.01f64..1.0,
    ) {
        let n = weights.len() + 1;
        let m = tree_metric(&weights, &parents[..n - 1]);
        let big = Shape::PerforatedBall { center: c1 % n, radius: r1, rho };
        let small = Shape::Ball { center: c2 % n, radius: r1 / rho * shrink };
        prop_assert!(shapes_overlap(&m, &big, &small) <= 1e-9);
    }

    #[test]
    fn partition_keeps_every_cylinder_once(
        radii in prop::collection::vec(-6i32..12, 0..20),
        rho in 2.0f64..5000.0,
    ) {
        let m = lone_request().metric().unwrap();
        let cyls: Vec<Cylinder> = radii
            .iter()
            .enumerate()
            .map(|(i, &e)| cyl(i, i % 3, 2f64.powi(e), i as f64, i as f64 + 0.5))
            .collect();
        let p = perforate_and_partition(&m, &cyls, rho);
        prop_assert_eq!(p.class_count() as i32, crate::tolerance::ceil_log2(rho) + 1);
        let mut owners: Vec<usize> = p.classes.iter().flatten().map(|c| c.owner).collect();
        owners.sort();
        prop_assert_eq!(owners, (0..cyls.len()).collect::<Vec<_>>());
        prop_assert!(p.overlapping.is_empty());
    }
}
