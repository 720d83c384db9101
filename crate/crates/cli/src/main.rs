fn main() {
    std::process::exit(isac_ident_cli::run(std::env::args_os()));
}
