fn main() {
    std::process::exit(iessic::cli::run(std::env::args_os()));
}
