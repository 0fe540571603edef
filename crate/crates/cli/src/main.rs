use clap::Parser;
use dwml_cli::Cli;

fn main() {
    let cli = Cli::parse();
    match cli.run() {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
