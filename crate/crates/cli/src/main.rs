fn main() {
    std::process::exit(dsd_cli::run(std::env::args_os()));
}
