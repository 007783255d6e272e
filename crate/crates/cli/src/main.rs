fn main() {
    std::process::exit(med_cli::run(std::env::args_os()));
}
