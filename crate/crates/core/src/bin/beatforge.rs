fn main() {
    beatforge::cli::main()
}
