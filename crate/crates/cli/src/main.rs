use clap::Parser;

fn main() {
    let cli = ddpqr_cli::Cli::parse();
    if let Err(e) = ddpqr_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
