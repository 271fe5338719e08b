use clap::Parser;

fn main() {
    let cli = volleyxai_cli::Cli::parse();
    if let Err(e) = volleyxai_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
