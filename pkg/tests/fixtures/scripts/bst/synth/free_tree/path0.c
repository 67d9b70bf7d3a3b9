#include "unity.h"
#include "header.h"
#include "helpers.h"

void setUp(void) {}
void tearDown(void) {}

void test_free_tree_path0_empty_tree(void)
{
    struct node *root = NULL;
    free_tree(root);
    TEST_ASSERT_NULL(root);
}
