fn main() {
    std::process::exit(l_rho::cli::run(std::env::args_os()));
}
