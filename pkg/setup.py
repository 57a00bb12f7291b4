from setuptools import setup

setup(
    name='planewave',
    version='0.1.0',
    description='Curvature, geodesics and isometry invariants of the plane-wave manifolds M_{6+4p,f}',
    packages=['src'],
    python_requires='>=3.8',
    install_requires=[
        'click>=8.1.7',
        'rich>=13.7.0',
        'sympy>=1.12',
        'numpy>=1.24',
        'scipy>=1.10',
    ],
    extras_require={'test': ['pytest>=7.4']},
    entry_points={'console_scripts': ['planewave=src.main:main']},
)
