//! Systolic and diastolic blood pressure (mmHg) against age (years) for
//! Marwari women living in the Burrabazar area of Kolkata, collected by the
//! Biological Sciences Division of the Indian Statistical Institute.
//!
//! The source is described as covering 40 women, but its printed table has
//! 38 rows: serial numbers 1 and 21 are absent. Only the printed rows are
//! shipped here; nothing is imputed.

/// `(serial, age, systolic, diastolic)` exactly as printed.
pub const BP_ROWS: [(u32, f64, f64, f64); 38] = [
    (2, 21.0, 120.0, 88.0),
    (3, 60.0, 180.0, 100.0),
    (4, 38.0, 110.0, 90.0),
    (5, 19.0, 100.0, 70.0),
    (6, 50.0, 170.0, 100.0),
    (7, 32.0, 130.0, 84.0),
    (8, 41.0, 120.0, 80.0),
    (9, 36.0, 140.0, 84.0),
    (10, 57.0, 170.0, 106.0),
    (11, 52.0, 110.0, 80.0),
    (12, 19.0, 120.0, 80.0),
    (13, 17.0, 110.0, 70.0),
    (14, 16.0, 120.0, 80.0),
    (15, 67.0, 160.0, 90.0),
    (16, 42.0, 130.0, 90.0),
    (17, 44.0, 140.0, 90.0),
    (18, 56.0, 170.0, 100.0),
    (19, 32.0, 150.0, 94.0),
    (20, 21.0, 140.0, 94.0),
    (22, 76.0, 160.0, 90.0),
    (23, 37.0, 110.0, 80.0),
    (24, 48.0, 130.0, 90.0),
    (25, 40.0, 160.0, 112.0),
    (26, 36.0, 150.0, 90.0),
    (27, 39.0, 140.0, 100.0),
    (28, 38.0, 110.0, 74.0),
    (29, 16.0, 110.0, 70.0),
    (30, 48.0, 130.0, 100.0),
    (31, 22.0, 120.0, 80.0),
    (32, 30.0, 110.0, 70.0),
    (33, 19.0, 120.0, 80.0),
    (34, 39.0, 124.0, 84.0),
    (35, 38.0, 130.0, 94.0),
    (36, 45.0, 120.0, 84.0),
    (37, 22.0, 130.0, 80.0),
    (38, 20.0, 120.0, 86.0),
    (39, 18.0, 120.0, 80.0),
    (40, 31.0, 112.0, 80.0),
];

/// Ages at which the demo reports conditional medians.
pub const REPORT_AGES: [f64; 12] = [21.0, 26.0, 31.0, 36.0, 41.0, 46.0, 51.0, 56.0, 61.0, 66.0, 71.0, 76.0];

/// Published medians at the report ages, `(systolic, diastolic)`; used as
/// reference values in the demo output.
pub const REFERENCE_MEDIANS: [(f64, f64); 12] = [
    (120.18, 90.50),
    (130.42, 100.79),
    (116.92, 89.48),
    (116.85, 87.25),
    (115.66, 85.95),
    (132.10, 85.24),
    (140.62, 90.05),
    (117.79, 87.22),
    (152.30, 96.19),
    (153.89, 93.76),
    (160.91, 96.45),
    (163.19, 95.57),
];

pub fn ages() -> Vec<f64> {
    BP_ROWS.iter().map(|r| r.1).collect()
}

pub fn pressures() -> Vec<Vec<f64>> {
    BP_ROWS.iter().map(|r| vec![r.2, r.3]).collect()
}
