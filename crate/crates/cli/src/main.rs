use std::io::Write;

fn main() {
    if let Ok(text) = std::env::var("COORDLAB_THREADS") {
        match text.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: COORDLAB_THREADS must be a positive integer, got `{text}`");
                std::process::exit(coordlab_cli::EXIT_ERROR);
            }
        }
    }
    let outcome = coordlab_cli::run(std::env::args_os());
    let _ = std::io::stdout().write_all(outcome.stdout.as_bytes());
    let _ = std::io::stderr().write_all(outcome.stderr.as_bytes());
    std::process::exit(outcome.code);
}
