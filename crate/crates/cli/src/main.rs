use clap::Parser;

fn main() {
    let cli = vidspeed_cli::Cli::parse();
    if let Err(e) = vidspeed_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
