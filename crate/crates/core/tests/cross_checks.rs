use med_core::bloch3::audit_povm;
use med_core::certify::{certify_povm, Tolerances, Verdict};
use med_core::enumerate3::{classify_landscape, root_to_povm, solve_stationary};
use med_core::gram::{ensemble_from_gram, random_ensemble, random_real_ensemble, GramMatrix};
use med_core::homotopy::{drag_between, rk4_drag, DragOptions};
use med_core::oracle::{helstrom_value, search_optimum};

fn drag(g: &GramMatrix) -> med_core::homotopy::RunReport {
    rk4_drag(g, &DragOptions::default()).unwrap()
}

#[test]
fn homotopy_matches_closed_form_for_pairs() {
    for seed in 0..10 {
        let g = random_ensemble(2, seed, 0.8).unwrap().gram().unwrap();
        let p = g.probs();
        let ov = g.matrix()[(0, 1)].norm() / (p[0] * p[1]).sqrt();
        let r = drag(&g);
        assert!((r.p_success() - helstrom_value(p[0], p[1], ov)).abs() < 1e-9);
    }
}

#[test]
fn enumeration_and_search_agree_with_homotopy() {
    for seed in 0..5 {
        let g = random_real_ensemble(3, seed, 0.7).unwrap().gram().unwrap();
        let h = drag(&g).p_success();
        let set = solve_stationary(&g).unwrap();
        let pd = set.positive_definite();
        assert_eq!(pd.len(), 1);
        assert!((pd[0].p_success.unwrap() - h).abs() < 1e-8);
        let s = search_optimum(&g, seed).unwrap();
        assert!((s.p_success - h).abs() < 1e-6);
    }
}

#[test]
fn enumerated_optimum_is_the_homotopy_measurement() {
    let g = random_real_ensemble(3, 21, 0.6).unwrap().gram().unwrap();
    let e = ensemble_from_gram(&g).unwrap();
    let report = drag(&g);
    let land = classify_landscape(&g).unwrap();
    let root = &land.global_entry().unwrap().root;
    let a = report.final_povm.ambient_vectors(&e).unwrap();
    let b = root_to_povm(&g, root).unwrap().ambient_vectors(&e).unwrap();
    for j in 0..3 {
        let overlap = (a.column(j).adjoint() * b.column(j))[(0, 0)].norm();
        assert!((overlap - 1.0).abs() < 1e-8);
    }
}

#[test]
fn chained_drag_matches_direct() {
    for seed in 0..4 {
        let m = 3 + (seed as usize % 2);
        let ga = random_ensemble(m, 100 + seed, 0.6).unwrap().gram().unwrap();
        let gb = random_ensemble(m, 200 + seed, 0.6).unwrap().gram().unwrap();
        let first = drag(&ga);
        let chained = drag_between(&ga, &first.final_state, &gb, &DragOptions::default()).unwrap();
        let direct = drag(&gb);
        assert!((chained.p_success() - direct.p_success()).abs() < 1e-8);
    }
}

#[test]
fn outputs_certify_and_audit() {
    for seed in 0..6 {
        let e = if seed % 2 == 0 {
            random_real_ensemble(3, seed, 0.7).unwrap()
        } else {
            random_ensemble(3, seed, 0.7).unwrap()
        };
        let g = e.gram().unwrap();
        let ge = ensemble_from_gram(&g).unwrap();
        let r = drag(&g);
        let cert = certify_povm(&ge, &r.final_povm, Tolerances::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::Optimal);
        audit_povm(&ge, &r.final_povm).unwrap();
    }
}

#[test]
fn swapped_outcomes_are_not_optimal() {
    for seed in 0..6 {
        let g = random_ensemble(3, seed, 0.7).unwrap().gram().unwrap();
        let ge = ensemble_from_gram(&g).unwrap();
        let r = drag(&g);
        let swapped = r.final_povm.permuted(&[1, 0, 2]);
        let cert = certify_povm(&ge, &swapped, Tolerances::default()).unwrap();
        assert_ne!(cert.verdict, Verdict::Optimal);
        assert!(matches!(cert.verdict.exit_code(), 2 | 3));
    }
}
