use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = simplekt_cli::args::Cli::parse();
    if let Err(e) = simplekt_cli::execute(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(simplekt_cli::exit_code(&e));
    }
}
