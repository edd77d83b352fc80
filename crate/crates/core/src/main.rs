fn main() {
    std::process::exit(hcflow::runner::cli::cli_main(std::env::args_os()));
}
