mod common;

const CASES: usize = 1000;

#[test]
fn detector_matches_naive_threshold_and_runs() {
    common::check_detection(11, CASES).unwrap();
}

#[test]
fn grid_association_matches_exhaustive_search() {
    common::check_association(12, CASES).unwrap();
}

#[test]
fn voxel_count_matches_occupied_cells() {
    common::check_voxels(13, CASES).unwrap();
}

#[test]
fn lateral_error_matches_exhaustive_segments() {
    common::check_lateral(14, CASES).unwrap();
}
