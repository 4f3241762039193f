// Generates a synthetic training corpus:
//   cargo run --release -p igkit-train --example make_corpus -- DIR [COUNT] [SIZE] [SEED]

use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir: PathBuf = match args.next() {
        Some(d) => d.into(),
        None => {
            eprintln!("usage: make_corpus DIR [COUNT] [SIZE] [SEED]");
            std::process::exit(2);
        }
    };
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let size: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(224);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    match igkit_train::synth_corpus(&dir, count, size, seed) {
        Ok(paths) => println!("wrote {} images of {size}x{size} to {}", paths.len(), dir.display()),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
