fn main() {
    std::process::exit(dirac_gap::cli::main_entry(std::env::args_os()));
}
