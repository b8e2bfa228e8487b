use clap::Parser;

fn main() {
    let cli = hfd_cli::Cli::parse();
    if let Err(e) = hfd_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(hfd_cli::exit_code(&e));
    }
}
