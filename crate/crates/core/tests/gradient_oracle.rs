mod common;

#[test]
fn gradients_match_finite_differences() {
    let check = common::check_gradients(50);
    eprintln!(
        "{} coordinates over {} instances, {} kink redraws, {:?}",
        check.coordinates, check.instances, check.redraws, check.elapsed
    );
    assert_eq!(check.mismatches, 0);
    assert!(check.elapsed.as_secs() < 60);
}
