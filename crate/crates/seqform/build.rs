fn main() {
    // LAPACK routines (dgetrf/dgetrs/dgesdd) come from the system OpenBLAS.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
