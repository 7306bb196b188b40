//! Runs every acceptance criterion and prints one line per criterion. Exits
//! nonzero if any criterion fails.

fn main() {
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    println!("\nacceptance criteria");
    for (i, criterion) in regnoise_suite::all().into_iter().enumerate() {
        if filter.is_some_and(|f| f as usize != i + 1) {
            continue;
        }
        let outcome = criterion();
        println!("{}", outcome.line());
        if !outcome.passed {
            failed += 1;
        }
    }
    println!("{failed} failed\n");
    if failed > 0 {
        std::process::exit(1);
    }
}
