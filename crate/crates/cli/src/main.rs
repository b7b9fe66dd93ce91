fn main() {
    std::process::exit(rffp_cli::run(std::env::args_os()));
}
