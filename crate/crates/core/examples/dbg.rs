use stsim::cmos::*;

fn main() {
    let m = CmosStModel::defaults();
    let grid: Vec<f64> = (0..=99).map(|i| m.vdd * (i as f64 + 0.5) / 100.0).collect();
    let c = trace_gamma2(&m, &grid).unwrap();
    println!("skipped rows: {:?}", c.rows_skipped.len());
    for (i, p) in c.points.iter().enumerate() {
        if i % 5 == 0 || i < 6 || i + 6 > c.points.len() {
            println!("{:3} v_in={:.6} v_out={:.6}", i, p.0, p.1);
        }
    }
    let (lo, mid, hi) = c.slope_profile(3).unwrap();
    println!("slopes lo={lo:.3} mid={mid:.3} hi={hi:.3}");
    // symmetric model field scale
    let s = CmosStModel::symmetric(1.2, 0.3, 2e-4, 2e-15);
    println!("sym field at mid = {:.3e}", s.field(0.6, 0.6).unwrap());
    println!("defaults field at (0,0.6) = {:.3e}", m.field(0.0, 0.6).unwrap());
}
