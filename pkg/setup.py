from setuptools import setup, find_packages

setup(
    name='wgqed',
    version='1.0',
    description='Waveguide QED with time-delayed coherent feedback: MPS time-bin and quantum-trajectory engines',
    packages=find_packages(exclude=['examples', 'examples.*']),
    python_requires='>=3.7',
    install_requires=[
        'pandas>=1.5',
        'numpy>=1.17',
        'numba>=0.50',
        'numexpr>=2.6',
        'scipy>=1.4'
    ],
    entry_points={
        'console_scripts': ['wgqed=wgqed.cli:main']
    }
)
