fn main() {
    std::process::exit(afpseg::cli::run(std::env::args_os()));
}
