use std::process::ExitCode;

use clap::Parser;

#[tokio::main]
async fn main() -> ExitCode {
    let cli = aries_cli::Cli::parse();
    ExitCode::from(aries_cli::run(cli).await)
}
