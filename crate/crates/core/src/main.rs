fn main() {
    std::process::exit(langevin_coupling::cli::main_with_args(std::env::args_os()));
}
