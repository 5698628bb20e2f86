use clap::Parser;

fn main() {
    let cli = nertag::cli::Cli::parse();
    if let Err(e) = nertag::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
