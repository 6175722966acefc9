"""Write a small structured genotype panel for the demo configuration.

Usage: python3 demos/make_panel.py [output_dir]
"""

import sys
from pathlib import Path

from gxesim.genotype_io import write_genotype_triplet
from gxesim.synthetic import structured_genotypes, write_populations


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    matrix, samples, snps = structured_genotypes(n=600, m=1000, populations=("CEU", "YRI", "CHB"), seed=3)
    write_genotype_triplet(matrix, samples, snps, out / "geno")
    write_populations(out / "populations.tsv", samples)
    print(f"wrote {matrix.n} individuals x {matrix.m} SNPs to {out}/geno.{{bed,bim,fam}}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("panel"))
