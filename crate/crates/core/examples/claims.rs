use std::time::Instant;

use lglab::claims::{run_claims, ClaimOptions};

fn main() {
    let grid = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(300);
    let t = Instant::now();
    let r = run_claims(&ClaimOptions {
        grid,
        ..Default::default()
    });
    print!("{}", r.table());
    println!("all pass: {} in {:?}", r.all_pass(), t.elapsed());
}
